# config/constants.py - Application constants that rarely change
"""
Static names and numbers that define the structure of the solver
These are values that fix formats and registries, not tunable settings
"""

# JSON documents (derivator dumps, hypothesis reports, error payloads)
SCHEMA_VERSION = 1

# CSV output: '.' decimal separator, header row, 17 significant digits
CSV_FLOAT_FORMAT = "%.17g"
CSV_LINE_TERMINATOR = "\n"

# Subcommands exposed by the command line
CLI_SUBCOMMANDS = [
    "gcalc", "integrate", "godesolve", "eig", "check-hyp", "solve", "silkworm"
]

# Builtin derivators selectable by name instead of a JSON path
BUILTIN_DERIVATORS = ["identity", "silkworm", "step"]

# Closed-form tags accepted in derivator JSON segments
SEGMENT_FORMS = ["identity", "affine", "constant", "sqrt_rise", "sqrt_fall"]

# Named integrands for the `integrate` debugging subcommand
INTEGRAND_NAMES = ["one", "t", "t2", "cos", "sin", "exp"]

# Named initial data / forcing profiles for `solve`
U0_PROFILES = ["first_mode", "decaying", "paraboloid", "constant", "random"]
FORCING_PROFILES = ["zero", "constant", "pulse"]

# Gauss-Legendre rule used by the adaptive Stieltjes quadrature
GAUSS_LEGENDRE_ORDER = 15

# Silkworm life cycle: period 5, death at 5k+4, rebirth at 5(k+1)
SILKWORM_PERIOD = 5.0
SILKWORM_ADULT_AGE = 4.0
SILKWORM_MEMORY_WINDOW = (5.0, 1.0)  # integral over [t-5, t-1]

# Environment variables read after load_dotenv()
ENV_TOLERANCE = "GSPECTRAL_TOL"
ENV_WORKERS = "GSPECTRAL_WORKERS"
ENV_LOG_LEVEL = "GSPECTRAL_LOG_LEVEL"

# Mesh text format: header `nv nt`, nv lines `x y flag`, nt lines `i j k` (1-based)
MESH_DUPLICATE_TOL = 1e-12
MESH_DEGENERATE_AREA = 1e-14
