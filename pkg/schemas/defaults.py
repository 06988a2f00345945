"""
Recommended defaults for class-prior estimation runs.

Grids and tolerances used when the caller does not supply its own. All
kernel widths are expressed in standardized feature units.
"""

# θ grid: 0.00, 0.01, ..., 1.00
DEFAULT_THETA_LO = 0.0
DEFAULT_THETA_HI = 1.0
DEFAULT_THETA_POINTS = 101

# Model selection
DEFAULT_FOLDS = 5
DEFAULT_SIGMA_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_MAX_CENTERS = 200
MEDIAN_HEURISTIC_MAX_POINTS = 500

# Finite-c L1 (c = 1 is the ordinary L1 distance)
DEFAULT_L1_SLOPE = 1.0

# Quadratic program: coordinate ascent on the constraint multipliers
QP_MAX_SWEEPS = 10_000
QP_UPDATE_TOL = 1e-13
QP_KKT_TOL = 1e-8
QP_ENTERING_BATCH = 10

# Looser quadratic program settings while ranking (sigma, lambda) candidates
CV_QP_KKT_TOL = 1e-6
CV_QP_MAX_SWEEPS = 2_000

# Projected subgradient ascent for the penalized KL / Pearson duals
SUBGRADIENT_MAX_ITER = 5_000
SUBGRADIENT_TOL = 1e-6

# Elkan-Noto classifier output clipping
EN_CLIP = 1e-3

# SB right-endpoint window (fraction of ROC points)
SB_FIT_WINDOW = 0.1

# Experiment harness
DEFAULT_TRIALS = 100
DEFAULT_HISTOGRAM_BINS = 20
ORACLE_SAMPLE_SIZE = 100_000
DEFAULT_CONVERGE_SIZES = (100, 200, 400, 800, 1600)
DEFAULT_BENCH_POSITIVES = 100
DEFAULT_BENCH_UNLABELED = 400
DEFAULT_BENCH_TRIALS = 50
DEFAULT_BENCH_PRIORS = (0.2, 0.5, 0.8)
DEFAULT_PCA_DIMS = 4
MIN_DEVIATION_RESAMPLES = 50
