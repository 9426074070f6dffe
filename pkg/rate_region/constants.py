import math

LOG2_2PIE = math.log2(2 * math.pi * math.e)

# Numerical tolerances
PSD_TOL = 1e-10
PIVOT_TOL = 1e-12
MI_CLAMP_TOL = 1e-9
RHO_EPS = 1e-6
TRANSCRIPTION_TOL = 1e-6

# Optimizer defaults
DEFAULT_GRID_POINTS = 512
DEFAULT_REFINE_ITERS = 60
DEFAULT_TOL = 1e-10
MIN_GRID_POINTS = 8
GOLDEN_RATIO = (math.sqrt(5) - 1) / 2

# Brute-force oracle
ORACLE_VARIANCE_RANGE = (1e-4, 1e4)
ORACLE_RHO_POINTS = 201
ORACLE_SIGMA_POINTS = 25
ORACLE_TOP_POINTS = 3
ORACLE_MAX_POINTS = 10 ** 7
ORACLE_SLACK = 1e-6
ORACLE_TIE_TOL = 1e-9

# Sweep
DEFAULT_D1 = 0.3
CSV_HEADER = ["d2", "ec2", "prp3", "modified_prp3", "repair3_nocommon", "repair3_common", "twonode_total"]
FLOAT_SIG_DIGITS = 9

# Simulator
DEFAULT_QUANTIZER_OVERHEAD_BITS = 0.5
GF_PRIMITIVE_POLY = 0x11D
MAX_NODES = 255
