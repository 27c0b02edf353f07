# global variable to allow people to globally override the location before running experiments,
# which is often useful in adhoc scripts being submitted onto the cluster.
DEFAULT_CACHE_DIR = "~/.raimi"
SLICE_CACHE_FILE = "slices.cache"

# env var capping the number of estimation workers
THREADS_ENV_VAR = "RAIMI_THREADS"

REPORT_SCHEMA_VERSION = "1"
SLICE_TABLE_SCHEMA_VERSION = "1"

# geometry tolerances
SURFACE_TOLERANCE = 1e-9
AXIS_TOLERANCE = 1e-12

# monte carlo
DEFAULT_Z = 3.0
SAMPLE_CHUNK_SIZE = 1 << 16
REJECTION_BUDGET = 1_000_000
OMEGA_VALIDATION_SAMPLES = 10_000
PARTITION_VALIDATION_SAMPLES = 100_000
RADIAL_TABLE_NODES = 10_000

# digit expansions are truncated after this many base-digits
MAX_DIGITS = 64

# harness defaults
DEFAULT_GRID = 2048
DEFAULT_SAMPLES_PER_CELL = 1000
DEFAULT_HALVINGS = 5
DEFAULT_CERTIFY_SAMPLES = 100_000
DEFAULT_VALIDATE_SAMPLES = 100_000
SLICE_BLOCK_CELLS = 64

# stream ids, one per pipeline stage, so stages never share random numbers
VALIDATION_STREAM = 0
COVER_STREAM = 1
SLICE_STREAM = 2
CERTIFY_STREAM = 3
MASS_STREAM = 4
HYPOTHESIS_STREAM = 5
