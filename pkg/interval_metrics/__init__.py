from interval_metrics.interval_metrics import *
from interval_metrics.rank_correlation import *
from interval_metrics.report import *
