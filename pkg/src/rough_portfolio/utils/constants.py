APP_NAME = "rough-portfolio"

# Variation exponents
DEFAULT_P = 2.5
DEFAULT_P_PRIME = 2.9
DEFAULT_Q = 1.5
DEFAULT_BETA = 0.55
DEFAULT_EPSILON = 0.1

# Anchor caps for the O(M^2) variation programs
PVAR_ANCHOR_CAP = 4096
TWO_PARAM_ANCHOR_CAP = 1024

DEFAULT_DET_FLOOR = 1e-8
DEFAULT_SEWING_CONSTANT = 10.0
DIVERGENCE_LIMIT = 1e12
MAX_NOISE_LEVEL = 20

# Grid time comparisons
TIME_TOLERANCE = 1e-12
# Allowed |Δ[Z] - (ΔZ)^2| per cell before the bracket check fails
BRACKET_JUMP_TOLERANCE = 1e-9

# Sweep defaults
DEFAULT_DELTA_EXPONENTS = (3, 4, 5, 6, 7, 8)
DEFAULT_LEVELS = (6, 7, 8, 9, 10, 11, 12)
REFINEMENT_GAP = 3
MIN_FIT_POINTS = 4

# Acceptance windows
STABILITY_SLOPE_WINDOW = (0.75, 1.25)
DISCRETIZATION_MAX_SLOPE = -0.15
SMOOTH_SLOPE_WINDOW = (-1.15, -0.85)

CSV_FLOAT_FORMAT = "%.17g"
REPORT_FILE = "report.json"
POINTS_FILE = "points.csv"
