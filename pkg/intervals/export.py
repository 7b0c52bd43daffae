import logging
from typing import Sequence

import numpy as np
import pandas as pd

from intervals.intervals import IntervalBatch
from util.errors import DataError
from util.text_io import write_csv_table

logger = logging.getLogger(__name__)

INTERVAL_COLUMNS = ('id', 'point', 'lower', 'upper', 'alpha', 'method')


def write_intervals_csv(path: str, batch: IntervalBatch, ids: Sequence[str] = None):
    n = batch.size
    if ids is None:
        ids = [str(i) for i in range(n)]
    if len(ids) != n:
        raise DataError(f'{len(ids)} ids for {n} intervals')
    frame = pd.DataFrame({0: np.asarray(ids, dtype=str), 1: batch.point, 2: batch.lower, 3: batch.upper,
                          4: np.full(n, float(batch.alpha)), 5: batch.method.value})
    write_csv_table(path, INTERVAL_COLUMNS, frame)
    logger.debug('wrote %d intervals to %s', n, path)
