"""
sketchrows Configuration
Tunable constants for the row-sampling pipelines.
Every value can be overridden from the environment (or a .env file).
"""
import os
from dotenv import load_dotenv

load_dotenv()

# ============================================================
# LINEAR ALGEBRA
# ============================================================
# Eigenvalues below RANK_REL_CUTOFF * lambda_max count as zero
RANK_REL_CUTOFF = float(os.getenv("SKETCHROWS_RANK_REL_CUTOFF", "1e-10"))

# Largest column count allowed for dense d x d work
MAX_DENSE_DIM = int(os.getenv("SKETCHROWS_MAX_DENSE_DIM", "5000"))

# Rows densified at a time when accumulating Gram products
GRAM_CHUNK_ROWS = int(os.getenv("SKETCHROWS_GRAM_CHUNK_ROWS", "4096"))

# Relative tolerance for symmetry / PSD checks
SYMMETRY_TOL = 1e-8
PSD_TOL = 1e-8

# ============================================================
# SAMPLING CONSTANTS (the O(.) the analysis leaves open)
# ============================================================
C_JL = float(os.getenv("SKETCHROWS_C_JL", "4"))          # rows of Pi per log(1/delta)/log(rho)
C_SAMPLE = float(os.getenv("SKETCHROWS_C_SAMPLE", "8"))  # oversampling c * ln(d) / eps^2
C_SCALE = float(os.getenv("SKETCHROWS_C_SCALE", "1.0"))  # constant inside O(R^3 log d)
C_STABLE = float(os.getenv("SKETCHROWS_C_STABLE", "6"))  # columns of the p-stable sketch

DEFAULT_DELTA = float(os.getenv("SKETCHROWS_DELTA", "0.01"))

# ============================================================
# L2 PIPELINE
# ============================================================
# R = max(MIN_REDUCTION_RATE, round(d ** DEFAULT_THETA))
DEFAULT_THETA = float(os.getenv("SKETCHROWS_THETA", "0.25"))
MIN_REDUCTION_RATE = 8  # ceil(e^2); ApproxStr needs rho = R >= e^2

# ============================================================
# LP PIPELINE
# ============================================================
C_P = float(os.getenv("SKETCHROWS_C_P", "1.0"))
N_STAR_CONST = float(os.getenv("SKETCHROWS_N_STAR_CONST", "2"))
MAX_REDUCE_ITERATIONS = 64
GUARANTEE_MAX_EPS = 1 / 7  # above this the lp guarantees are empirical only
STABILIZED_SHRINK = 0.9    # two-level loop stops when a round keeps > 90% of rows

# Monte Carlo draws for the median of |p-stable|
STABLE_MEDIAN_SAMPLES = 1_000_000
STABLE_MEDIAN_SEED = 20130911

# ============================================================
# VERIFICATION
# ============================================================
NULL_SPACE_TOL = 1e-8     # relative to ||B||_F
DIRECTION_ZERO_TOL = 1e-12
DEFAULT_DIRECTIONS = 1000

# ============================================================
# RUNTIME
# ============================================================
THREADS = int(os.getenv("SKETCHROWS_THREADS", "0")) or (os.cpu_count() or 1)

# ============================================================
# REPORTS & HISTORY
# ============================================================
REPORT_SCHEMA_VERSION = "sketchrows.report/1"
RUN_HISTORY_PATH = os.getenv("SKETCHROWS_HISTORY", "")  # empty = disabled

# ============================================================
# LOGGING
# ============================================================
LOG_LEVEL = os.getenv("SKETCHROWS_LOG_LEVEL", "INFO")
