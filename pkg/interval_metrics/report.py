import math
from datetime import datetime
from typing import Iterable, Sequence, Callable, List, NamedTuple, Tuple

import pandas as pd

from interval_metrics.interval_metrics import EvalReport, EVAL_COLUMNS, BoundDistances
from interval_metrics.rank_correlation import PropertyCorrelation
from util.constants import VERSION
from util.errors import DataError
from util.text_io import read_csv_cells, write_csv_table

WIDTH_COLUMNS = ('property', 'rho', 'p_value', 'n', 'applicable')
CV_SCORE_COLUMNS = ('fold', 'mae', 'rmse', 'validation_loss')


def _write_rows(path: str, header: Sequence[str], rows: Iterable[Sequence]):
    write_csv_table(path, header, pd.DataFrame([tuple(row) for row in rows], columns=range(len(header))))


def write_eval_csv(path: str, reports: Iterable[EvalReport]):
    _write_rows(path, EVAL_COLUMNS, reports)


def read_eval_csv(path: str) -> List[EvalReport]:
    header, body = read_csv_cells(path)
    if tuple(header) != EVAL_COLUMNS:
        raise DataError(f'{path}: not an evaluation table (header {header})')
    reports = []
    for line_no, row in zip(body.index, body.itertuples(index=False)):
        try:
            reports.append(EvalReport(
                method=row[0], alpha=float(row[1]), picp=float(row[2]), picp_minus_nominal=float(row[3]),
                mpiw=float(row[4]), n_infinite=int(row[5]), r2=float(row[6]), mae=float(row[7]),
                rmse=float(row[8])))
        except ValueError as e:
            raise DataError(f'{path}:{line_no}: {e}') from e
    return reports


def write_width_properties_csv(path: str, correlations: Iterable[PropertyCorrelation]):
    _write_rows(path, WIDTH_COLUMNS, ((c.property, c.rho, c.p_value, c.n, int(c.applicable))
                                      for c in correlations))


def write_cv_scores_csv(path: str, mae: Sequence[float], rmse: Sequence[float], validation_loss: Sequence[float]):
    _write_rows(path, CV_SCORE_COLUMNS, ((i, a, r, v) for i, (a, r, v) in enumerate(zip(mae, rmse, validation_loss))))


class SummarySection(NamedTuple):
    method: str
    rows: Sequence[EvalReport]
    bounds: BoundDistances = None


def _fmt(v: float, width: int, digits: int = 4) -> str:
    if math.isnan(v):
        return 'N/A'.rjust(width)
    return f'{v:{width}.{digits}f}'


def write_summary(write_fun: Callable[[str], object], sections: Iterable[SummarySection], header: Sequence[str] = ()):
    l1 = '-' * 80
    l2 = '=' * 80
    w = write_fun
    w(f"generated by mvir-intervals {VERSION}\n"
      f"report date: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
    for line in header:
        w(f"{line}\n")
    w('\n')
    for section in sections:
        w(f"{l1}\nMethod: {section.method}\n{l1}\n\n"
          f"   alpha     PICP   PICP-nom       MPIW  inf      MAE     RMSE\n{l1}\n")
        for r in section.rows:
            w(f"{r.alpha:8.3f}"
              f"{_fmt(r.picp, 9)}"
              f"{_fmt(r.picp_minus_nominal, 11)}"
              f"{_fmt(r.mpiw, 11)}"
              f"{r.n_infinite:5d}"
              f"{_fmt(r.mae, 9)}"
              f"{_fmt(r.rmse, 9)}\n")
        coverage_fit = section.rows[0].r2 if section.rows else math.nan
        w(f"{l1}\n\nLevels:            {len(section.rows)}\n"
          f"Coverage R2:       {_fmt(coverage_fit, 0)}\n")
        if section.bounds is not None:
            b = section.bounds
            w(f"Median below:      {_fmt(b.median_lower, 0)}\n"
              f"Median above:      {_fmt(b.median_upper, 0)}\n"
              f"Catalogue error:   {_fmt(b.median_reference, 0)}\n")
        w(f"{l2}\n\n")


def write_bounds_csv(path: str, bounds: Iterable[Tuple[str, BoundDistances]]):
    _write_rows(path, ('method', 'median_lower', 'median_upper', 'median_reference'),
                ((method, *b) for method, b in bounds))
