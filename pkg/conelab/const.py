"""Generic constants for the cone-energy laboratory."""

DOMAIN = "conelab"

# Configuration sections
CONF_GRID = "grid"
CONF_METRIC = "metric"
CONF_OBSTACLE = "obstacle"
CONF_DATA = "data"
CONF_CONE = "cone"
CONF_RUN = "run"
CONF_GEODESIC = "geodesic"
CONF_DIAGNOSTICS = "diagnostics"
CONF_NORMS = "norms"
CONF_OUTPUT = "output"

REQUIRED_SECTIONS = (CONF_GRID,)
KNOWN_SECTIONS = (
    CONF_GRID,
    CONF_METRIC,
    CONF_OBSTACLE,
    CONF_DATA,
    CONF_CONE,
    CONF_RUN,
    CONF_GEODESIC,
    CONF_DIAGNOSTICS,
    CONF_NORMS,
    CONF_OUTPUT,
)

# Configuration keys
CONF_NAME = "name"
CONF_SEED = "seed"
CONF_THREADS = "threads"

# Initial data kinds
DATA_KIND_NONE = "none"
DATA_KIND_BUMP = "bump"
DATA_KIND_FOCUSED = "focused"
DATA_KIND_RANDOM = "random_smooth"

DATA_KINDS = {
    DATA_KIND_NONE: "Zero data",
    DATA_KIND_BUMP: "Compact smooth bump in u and/or u_t",
    DATA_KIND_FOCUSED: "Incoming spherical shell focused toward the apex",
    DATA_KIND_RANDOM: "Sum of random compact bumps (seeded)",
}

# Distance modes for the eikonal solve
DISTANCE_MANIFOLD = "manifold"
DISTANCE_OBSTACLE_AVOIDING = "obstacle_avoiding"
DISTANCE_MODES = {
    DISTANCE_MANIFOLD: "Metric distance computed through the obstacle",
    DISTANCE_OBSTACLE_AVOIDING: "Metric distance restricted to the exterior domain",
}

# Numerical defaults
DEFAULT_CFL_SAFETY = 0.5
DEFAULT_EIKONAL_TOL = 1e-9  # mean change of the factored unknown per node
DEFAULT_EIKONAL_MAX_ITERATIONS = 500
DEFAULT_EIKONAL_INIT_RADIUS = 3.0  # cells
DEFAULT_RESIDUAL_FACTOR = 10.0  # tol_eik = factor * h
DEFAULT_RHO_MAX_FRACTION = 0.4
DEFAULT_DIAGNOSTIC_CADENCE = 1
DEFAULT_FINITE_SPEED_CADENCE = 50
DEFAULT_FINITE_SPEED_MARGIN = 4.0  # cells
DEFAULT_DATA_CLEARANCE = 4.0  # cells
DEFAULT_ENERGY_DRIFT_TOL = 1e-3
DEFAULT_QUADRATURE_TOL = 1e-2  # epsilon_h as a fraction of E0
DEFAULT_FLUX_AGREEMENT_TOL = 5e-2
DEFAULT_BAND_CONSTANT = 10.0
DEFAULT_SMALL_RHO_SHELL = (2.0, 10.0)  # cells
DEFAULT_TANGENCY_RADIUS = 0.2

# Exit codes
EXIT_PASS = 0
EXIT_ASSERTION_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ABORT = 3

# Error codes for lab operations
ERROR_CODES = {
    "GRID_MISMATCH": "Field shape does not match the grid",
    "MASKED_NODE": "Operation requested at a node outside the fluid domain",
    "NOT_SYMMETRIC": "Coefficient matrix is not symmetric",
    "NOT_POSITIVE_DEFINITE": "Coefficient matrix is not positive definite",
    "EIKONAL_NOT_CONVERGED": "Eikonal sweeping did not reach a fixed point",
    "SOURCE_OUTSIDE_GRID": "Source point lies outside the grid",
    "CFL_VIOLATION": "Time step exceeds the stability limit",
    "NAN_DETECTED": "Non-finite values in the solution",
    "NO_OBSTACLE": "Operation requires an obstacle",
    "EMPTY_REGION": "Region selects no nodes",
    "INSUFFICIENT_HISTORY": "Not enough time levels for the requested derivative",
    "CONFIG_PARSE": "Configuration could not be parsed",
    "CONFIG_SECTION_MISSING": "Required configuration section missing",
    "UNKNOWN_NAME": "Name not found in the registry",
    "BOOTSTRAP_PRECONDITION": "Bootstrap smallness condition violated",
}

# CSV column schemas
MANIFEST_COLUMNS = ("step", "t", "E", "E_cone", "l6_mass")
LEDGER_COLUMNS = (
    "t",
    "E_total",
    "E_cone",
    "flux_identity",
    "flux_direct",
    "l6_mass",
    "trace_accum",
)
BUDGET_COLUMNS = (
    "S",
    "lhs_l6",
    "flux_term",
    "flux_cbrt_term",
    "s2_e0_term",
    "bulk_term",
    "trace_term",
)
NORM_COLUMNS = ("t", "q", "slice_lq", "running_mixed_norm")
COMPARISON_COLUMNS = ("node", "lhs", "mid", "rhs", "margin")
CURVATURE_COLUMNS = ("node", "plane", "kappa")
CONVERGENCE_COLUMNS = ("quantity", "level", "h", "error", "order", "threshold", "passed")
