import logging
from typing import NamedTuple, Tuple, List, Callable, Iterator

import numpy as np

from catalogue.catalogue import Dataset, take
from util.errors import ConfigError, DataError

logger = logging.getLogger(__name__)


class QualityCutSpec(NamedTuple):
    min_flux_snr: float = 2.0
    log_lum_range: Tuple[float, float] = (38.0, 48.0)
    min_pixel_snr: float = 10.0
    max_mass_err: float = 0.5
    max_width_err: float = 2000.0
    # metadata prefixes, one per emission line: ('hb_', 'mgii_') reads hb_log_L, mgii_log_L, ...
    lines: Tuple[str, ...] = ('',)


class CutStep(NamedTuple):
    criterion: str
    survivors: int


class CutResult(NamedTuple):
    dataset: Dataset
    steps: List[CutStep]


class _Criterion(NamedTuple):
    name: str
    column: str
    accept: Callable[[np.ndarray], np.ndarray]


def validate_cut_spec(spec: QualityCutSpec):
    lo, hi = spec.log_lum_range
    if not lo < hi:
        raise ConfigError(f'log_lum_range: lower bound {lo} must be below upper bound {hi}')
    for field in ('min_flux_snr', 'min_pixel_snr', 'max_mass_err', 'max_width_err'):
        if getattr(spec, field) < 0:
            raise ConfigError(f'{field}: must be >= 0')
    if not spec.lines:
        raise ConfigError('lines: at least one line prefix is required')


def _criteria(spec: QualityCutSpec) -> Iterator[_Criterion]:
    """sequential selection order: flux S/N, luminosity range, pixel S/N,
    width availability, mass availability, mass error, width error"""
    lo, hi = spec.log_lum_range
    for line in spec.lines:
        yield _Criterion(f'{line}flux_snr > {spec.min_flux_snr:g}', f'{line}flux_snr',
                         lambda v: v > spec.min_flux_snr)
    for line in spec.lines:
        yield _Criterion(f'{lo:g} <= {line}log_L <= {hi:g}', f'{line}log_L',
                         lambda v: (v >= lo) & (v <= hi))
    yield _Criterion(f'snr >= {spec.min_pixel_snr:g}', 'snr',
                     lambda v: v >= spec.min_pixel_snr)
    for line in spec.lines:
        yield _Criterion(f'{line}fwhm available', f'{line}fwhm', np.isfinite)
    for line in spec.lines:
        yield _Criterion(f'{line}mass available', f'{line}mass', np.isfinite)
    for line in spec.lines:
        yield _Criterion(f'{line}mass_err < {spec.max_mass_err:g}', f'{line}mass_err',
                         lambda v: v < spec.max_mass_err)
    for line in spec.lines:
        yield _Criterion(f'{line}fwhm_err < {spec.max_width_err:g}', f'{line}fwhm_err',
                         lambda v: v < spec.max_width_err)


def cut_columns(spec: QualityCutSpec) -> List[str]:
    return [c.column for c in _criteria(spec)]


def apply_quality_cuts(raw: Dataset, spec: QualityCutSpec = QualityCutSpec()) -> CutResult:
    """survivor counts depend on the criterion order, the final selection does not"""
    validate_cut_spec(spec)
    criteria = list(_criteria(spec))
    missing = [c.column for c in criteria if c.column not in raw.metadata]
    if missing:
        raise DataError(f'quality cuts reference absent metadata columns: {", ".join(missing)}')

    keep = np.ones(raw.n_samples, dtype=bool)
    steps = []
    with np.errstate(invalid='ignore'):
        for criterion in criteria:
            keep &= criterion.accept(raw.metadata[criterion.column])
            survivors = int(np.count_nonzero(keep))
            steps.append(CutStep(criterion.name, survivors))
            logger.info('%-40s %d', criterion.name, survivors)
    return CutResult(take(raw, np.flatnonzero(keep)), steps)
