from intervals.quantiles import *
from intervals.intervals import *
from intervals.export import *
