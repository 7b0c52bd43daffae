VERSION = '0.3.0'

FEATURE_WIDTH = 1000

SPLIT_FRACTIONS = (0.7, 0.2, 0.1)
# the quoted 70/20/10 of the 13952-spectrum catalogue sample is rounded; these give 9766/2930/1256
CATALOGUE_SPLIT_FRACTIONS = (0.7, 0.21, 0.09)

RANDOM_GENERATOR = 'PCG64'

LUMINOSITY_PIVOT_LOG = 44.0
HBETA_COEFFICIENTS = (0.91, 0.50, 2.0)
MGII_COEFFICIENTS = (0.74, 0.62, 2.0)

ADAM_BETA_1 = 0.9
ADAM_BETA_2 = 0.999
ADAM_EPSILON = 1e-8

DEFAULT_ALPHA = 0.1
DEFAULT_ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))

BOOTSTRAP_RETRY_BUDGET = 100
EXACT_PERMUTATION_MAX_N = 10

OUTPUT_ROOT_ENV = 'MVIR_OUTPUT_ROOT'
