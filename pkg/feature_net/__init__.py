from feature_net.feature_net import *
from feature_net.checkpoint import *
