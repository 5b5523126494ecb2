import os
from pathlib import Path

# Project directories
BASE_DIR = Path(__file__).resolve().parent.parent
OUTPUT_DIR = BASE_DIR / "output"
SPECS_DIR = BASE_DIR / "specs"

# Create directories if they don't exist
OUTPUT_DIR.mkdir(exist_ok=True)

# Logging
LOG_LEVEL = os.environ.get("ESDMIX_LOG_LEVEL", "INFO").upper()

# Problem validation
HERMITIAN_TOL = 1e-12
NEGATIVE_EIGENVALUE_TOL = 1e-10
WEIGHT_SUM_TOL = 1e-12
GAMMA_GUARD = 1e-9

# Solver settings
EPSILON = 1e-5
XI0 = 1.0
BETA = 10.0
Q_CAP = 2
DAMPING_SCALE = 0.1
MAX_BACKOFFS = 3
MAX_ITERS_CEILING = 10**6

# Grid settings
DISPERSION_MARGIN = 1.001
POINTS_PER_EIGENVALUE = 3
MIN_POINTS_PER_SEGMENT = 15
MIN_DIMENSION = 100
REGRID_LEVELS = 1
REGRID_RATIO = 1.0
CURVATURE_FLOOR = 0.05

# Diagnostics
MASS_DEFICIT_WARNING = 5e-3
MC_CLAMP_TOL = 1e-8

# Service settings
API_HOST = os.environ.get("ESDMIX_API_HOST", "0.0.0.0")
API_PORT = int(os.environ.get("ESDMIX_API_PORT", "8000"))
