DEFAULT_N = 500
# rough null-control states need the finer design grid to beat free decay
NULL_CONTROL_N = 1000
DEFAULT_TRUNCATION = 20
DEFAULT_TABLE_ORDER = 25
DEFAULT_N_SIM = 2000
DEFAULT_DT = 1e-4
DEFAULT_TOLERANCE = 1e-3
MIN_ORDER = 3

DENOMINATOR_THRESHOLD = 1e-12
PIVOT_THRESHOLD = 1e-14
THETA_SAMPLES_PER_PIECE = 257

PSI0_CLAMP_EXPONENT = 745.0
GEVREY_MIN_ALPHA = 1.002
QUAD_TOLERANCE = 1e-12
SERIES_MAX_TERMS = 60
SERIES_RELATIVE_CUTOFF = 1e-16
GAMMA_SHRINK_FACTOR = 0.9

JET_MAGNITUDE_LIMIT = 1e280
SURROGATE_DIVERGENCE_RATIO = 0.10
PROPAGATION_STEPS_PER_S = 2000
PROPAGATION_RICHARDSON_TOL = 1e-8
RICHARDSON_TOLERANCE = 0.05
STARTUP_HALF_STEPS = 2

GROWTH_MARGIN = 0.1
COEFFICIENT_BOUND_MARGIN = 0.1
CSV_DIGITS = 17
TRUNCATION_LEVELS = (1, 5, 13, 18, 20)
VERIFY_SNAPSHOTS = 100
REFERENCE_REFINEMENT = 4
