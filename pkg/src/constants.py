# Process exit codes
EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERIC_FAILURE = 3
EXIT_CORRUPT_ARTIFACT = 4

# Error Types
VALIDATION_ERROR = "VALIDATION_ERROR"
NUMERIC_ERROR = "NUMERIC_ERROR"
COLLECTIVE_ERROR = "COLLECTIVE_ERROR"
ARTIFACT_ERROR = "ARTIFACT_ERROR"
CONTRACT_ERROR = "CONTRACT_ERROR"
VERIFICATION_ERROR = "VERIFICATION_ERROR"
STORAGE_ERROR = "STORAGE_ERROR"
SERVER_ERROR = "SERVER_ERROR"

# Validation Error Codes
GRID_SIZE_INVALID = "GRID_SIZE_INVALID"
RESOLUTION_EXCEEDED = "RESOLUTION_EXCEEDED"
SHAPE_MISMATCH = "SHAPE_MISMATCH"
DOMAIN_ERROR = "DOMAIN_ERROR"
CONFIG_INVALID = "CONFIG_INVALID"
GRID_KIND_MISMATCH = "GRID_KIND_MISMATCH"

# Numeric Error Codes
NON_CONVERGENCE = "NON_CONVERGENCE"
NAN_DETECTED = "NAN_DETECTED"
ZERO_NORM_TARGET = "ZERO_NORM_TARGET"
UNDEFINED_ACC = "UNDEFINED_ACC"

# Collective Error Codes
COLLECTIVE_ABORT = "COLLECTIVE_ABORT"
COLLECTIVE_TIMEOUT = "COLLECTIVE_TIMEOUT"

# Autodiff Contract Codes
TAPE_CONSUMED = "TAPE_CONSUMED"
NON_SCALAR_LOSS = "NON_SCALAR_LOSS"
UNREGISTERED_OP = "UNREGISTERED_OP"

# Artifact Error Codes
CHECKPOINT_CORRUPT = "CHECKPOINT_CORRUPT"
DATASET_CORRUPT = "DATASET_CORRUPT"
TABLE_CACHE_CORRUPT = "TABLE_CACHE_CORRUPT"
WRITE_FAILED = "WRITE_FAILED"

VERIFICATION_FAILED = "VERIFICATION_FAILED"

# File format versions
CHECKPOINT_FORMAT_VERSION = "sfno-checkpoint/1"
DATASET_FORMAT_VERSION = "swe-dataset/1"
TRAJECTORY_FORMAT_VERSION = "rollout-trajectory/1"
LEGENDRE_CACHE_FORMAT_VERSION = "legendre-table/1"
REPORT_FORMAT_VERSION = "evaluation-report/1"
METRICS_LOG_FORMAT_VERSION = "metrics-log/1"

# Equiangular rings sit at cell centers; recorded in every grid header
RING_PLACEMENT = "centered"

# Earth parameters (SI)
EARTH_GRAVITY = 9.80616
EARTH_RADIUS = 6.37122e6
EARTH_ANGULAR_VELOCITY = 7.292e-5

# Shallow-water random initial conditions
SWE_MEAN_DEPTH = 1.0e3
SWE_DEPTH_STD = 120.0
SWE_VELOCITY_STD_FACTOR = 0.2
SWE_SPECTRUM_L0 = 10.0
SWE_DEFAULT_DT = 150.0
SWE_HYPERDIFFUSION_EFOLD_HOURS = 2.0

SWE_CHANNELS = ("geopotential", "vorticity", "divergence")

INSTANCE_NORM_EPS = 1e-5
