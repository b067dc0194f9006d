"""
============================================================================
TAIL TREE TOOLKIT — CENTRAL CONFIGURATION
============================================================================
All numerical tolerances, sampling parameters, and run settings are
defined here. Modify this file (or set the TAILTREE_* environment
variables) to tune the toolkit without touching any other source file.
============================================================================
"""

import os

# ── Application ────────────────────────────────────────────────────────────
LOG_DIR         = os.environ.get("TAILTREE_LOG_DIR", "data/logs")
DEFAULT_SEED    = 0
DEFAULT_FORMAT  = "csv"           # sample matrices: csv | json; reports are JSON
CSV_FLOAT_FORMAT= "%.17g"         # round-trip exact floats in CSV output

# ── Validation Tolerances ──────────────────────────────────────────────────
WEIGHT_TOLERANCE        = 1e-12   # discrete weights / exact laws sum to 1
ATOM_MATCH_RTOL         = 1e-12   # atom lookup in exact laws (merging stays exact)
MOMENT_TOLERANCE        = 1e-9    # E[M^alpha] vs c_b/c_a, E[M] <= 1
REVERSAL_CHECK_TOL      = 1e-6    # stored vs derived reversed increment CDF
ZERO_MASS_EXACT_TOL     = 1e-6    # moment test on exact sources
ZERO_MASS_SE_FACTOR     = 3.0     # moment test on sampled sources (x SE)
CONSISTENCY_EXACT_TOL   = 1e-9    # nu discrepancy between exact sources
CONSISTENCY_SE_FACTOR   = 3.0     # nu discrepancy between sampled sources
PICKANDS_CONVEXITY_TOL  = 1e-6    # slope decrease absorbed by projection
PICKANDS_BOUND_TOL      = 1e-9    # max(w, 1-w) <= A(w) <= 1 slack

# ── Quadrature ──────────────────────────────────────────────────────────────
QUAD_ABS_TOL            = 1e-10
QUAD_REL_TOL            = 1e-10
QUAD_LIMIT              = 200     # subintervals per adaptive quad call
FAR_LOG_Z               = 345.0   # |log z| beyond which 0 * inf is float overflow

# ── Inverse-CDF Bisection ──────────────────────────────────────────────────
BISECTION_REL_TOL       = 1e-10   # relative width of the final bracket
BISECTION_MAX_ITER      = 200
BRACKET_GROWTH          = 10.0    # geometric bracket expansion factor
BRACKET_MAX_EXPANSIONS  = 30      # bracket spans x * GROWTH^(+-30) at most

# ── Sampling & Workers ─────────────────────────────────────────────────────
SAMPLE_BLOCK_SIZE       = int(os.environ.get("TAILTREE_BLOCK_SIZE", 100_000))
MAX_THREADS             = int(os.environ.get("TAILTREE_THREADS", 0)) or None
RESAMPLE_POOL_FACTOR    = 20      # pool size multiplier for weighted resampling

# ── Exact Enumeration ──────────────────────────────────────────────────────
MAX_ENUMERATION_STATES  = 1_000_000
MAX_EVENT_BOXES         = 12      # inclusion-exclusion over 2^boxes subsets

# ── Empirical Conditioning ─────────────────────────────────────────────────
MIN_EXCEEDANCES         = 1_000
MIN_COMPARE_POINTS      = 100
REVERSAL_GRID           = (1e-3, 1e3, 61)   # log-grid for reversal checks

# ── Verification Suites ────────────────────────────────────────────────────
VERIFY_MOMENT_N         = 1_000_000
VERIFY_CONSISTENCY_N    = 1_000_000
VERIFY_CONVERGENCE_N    = 10_000_000
VERIFY_CONVERGENCE_Q    = (0.9, 0.99, 0.999)
VERIFY_ROOT_CHANGE_N    = 10_000_000
VERIFY_ROOT_CHANGE_Q    = 0.999
VERIFY_DAG_TRIALS       = 200
VERIFY_DAG_MAX_NODES    = 8

# ── Run Telemetry ──────────────────────────────────────────────────────────
SYSMON_INTERVAL         = 0.25    # seconds between resource samples
MAX_MEMORY_LOGS         = 500     # events kept in memory by the report logger
