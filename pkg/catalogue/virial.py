from typing import Tuple

import numpy as np

from util.constants import HBETA_COEFFICIENTS, MGII_COEFFICIENTS, LUMINOSITY_PIVOT_LOG
from util.errors import DataError

LINE_COEFFICIENTS = {
    'hb': HBETA_COEFFICIENTS,
    'mgii': MGII_COEFFICIENTS,
}


def virial_log_mass(log_L, fwhm, coeffs: Tuple[float, ...] = HBETA_COEFFICIENTS):
    """log10(M / M_sun) = a + b * log10(L / 1e44 erg/s) + c * log10(FWHM / km/s)

    coeffs is (a, b) or (a, b, c); c defaults to 2.
    """
    if len(coeffs) == 2:
        a, b = coeffs
        c = 2.0
    else:
        a, b, c = coeffs
    fwhm = np.asarray(fwhm, dtype=np.float64)
    if np.any(~(fwhm > 0)):
        raise DataError('FWHM must be positive')
    result = a + b * (np.asarray(log_L, dtype=np.float64) - LUMINOSITY_PIVOT_LOG) + c * np.log10(fwhm)
    if result.ndim == 0:
        return float(result)
    return result


def virial_log_mass_for_line(line: str, log_L, fwhm):
    try:
        coeffs = LINE_COEFFICIENTS[line.lower().rstrip('_')]
    except KeyError:
        raise DataError(f'no virial coefficients for line "{line}", known: {", ".join(LINE_COEFFICIENTS)}')
    return virial_log_mass(log_L, fwhm, coeffs)
