class Defaults:
    """Named constants shared across the package."""

    # exact-lab
    STATE_CAP = 200_000
    DENSE_EIGEN_CAP = 8_000
    GAP_CACHE_DIR = ".zrpflux.cache.v1"

    # engine
    EVENT_BUDGET = 2_000_000_000
    EVENT_LOG_CHUNK = 1 << 16
    WINDOW_MIN_FACTOR = 20
    WINDOW_SPREAD_FACTOR = 8

    # sampler
    BUMP_GRID_POINTS = 256
    QUAD_TOL = 1e-13

    # stats
    BOOTSTRAP_RESAMPLES = 1000
    MIN_HURST_REPLICAS = 100
    HURST_WINDOW_DEPTH = 36.0
    MIN_FIT_REPLICAS = 30
    FBM_MAX_POINTS = 2048

    # she
    SHE_SPREAD_FACTOR = 8

    # io
    CSV_DIGITS = 17
    OUT_ENV_VAR = "ZRPFLUX_OUT"
    DEFAULT_OUT_DIR = "zrpflux-out"
