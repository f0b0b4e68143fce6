MATRIX_MAGIC = b'VOXREG\x00\x01'

ROI_CAP = 200
DEFAULT_LAG = 4

RIDGE_GRID_POINTS = 30
RIDGE_GRID_DECADES = 3

EN_L1_POINTS = 20
EN_L1_DECADES = 4
EN_L2_FACTORS = (0.0, 0.01, 0.1, 1.0, 10.0)

DEFAULT_FOLDS = 10
DEFAULT_DYNAMIC_TRIM = 5
MAX_EXHAUSTIVE_PAIRS = 10 ** 4

BURN_IN = 100
THIN = 10
SAMPLES = 150

RADIUS_FACTORS = (0, 1, 2, 3, 4)
GAMMA_GRID = (0.0, 0.1, 0.3, 1.0, 3.0)
BANDWIDTH_FACTORS = (1, 2, 4)

# Seed derivation keys: SeedSequence([master, key, index])
SEED_FOLDS = 0
SEED_FIT = 1
SEED_SMOOTHING = 2
SEED_PAIRS = 3
SEED_WEIGHTS = 4
SEED_REPLICATE = 5
SEED_HOLDOUT = 6
SEED_SHUFFLE = 7

OUTPUT_ENV = 'VOXREG_OUTPUT_DIR'

SIM_ROWS = 200
SIM_FEATURES = 8
SIM_VOXELS = 500
SIM_AREAS = 5
SIM_REPLICATES = 30
TOY_VOXELS = 12
TOY_ROWS = 40
