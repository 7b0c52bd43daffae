from boosting.boosting import *
from boosting.trees import RegressionTree, LEAF
from boosting.search import *
from boosting.serialization import *
