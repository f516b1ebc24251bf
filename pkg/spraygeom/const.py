"""Constants for the spraygeom package."""

DOMAIN = "spraygeom"

SUITES = [
    "spray",
    "connection",
    "second-order",
    "geodesic",
]

SUITE_ALL = "all"

# =============================================================================
# Sampling Constants
# =============================================================================

DEFAULT_SEED: int = 42
"""Seed used for every sampled check unless overridden"""

DEFAULT_SAMPLES: int = 100
"""Sample count for residual checks over chart points"""

IDENTITY_SAMPLES: int = 500
"""Random double-tangent vectors per exact coordinate identity"""

HOMOGENEITY_SAMPLES: int = 200
"""Sample count for the spray homogeneity check"""

AXIOM_SAMPLES: int = 50
"""Sample count for the covariant-derivative axiom checks"""

INDUCED_SAMPLES: int = 200
"""Sample count for the induced second-order connection check"""

MAX_REJECTION_FACTOR: int = 50
"""Rejection sampling gives up after count * factor draws"""

DEFAULT_BOX: tuple[float, float] = (-1.0, 1.0)
"""Per-coordinate sampling interval when a manifold declares none"""

HOMOGENEITY_SCALARS: tuple[float, ...] = (-2.0, -1.0, 0.0, 0.5, 1.0, 2.0)
"""Scalars s used to test S2(x, s v) = s^2 S2(x, v)"""

# =============================================================================
# Finite Difference Constants
# =============================================================================

FD_EPS_FIRST: float = 1e-5
"""Central difference step for first derivatives"""

FD_EPS_SECOND: float = 1e-4
"""Central difference step for second derivatives"""

FD_EPS_MIN: float = 1e-8
FD_EPS_MAX: float = 1e-3

CHRISTOFFEL_EPS: float = 1e-5
"""Central difference step of the Christoffel oracle"""

# =============================================================================
# Tolerances
# =============================================================================

DEFAULT_TOLERANCES: dict[str, float] = {
    "exact": 1e-15,
    "symmetry": 1e-12,
    "torsion": 1e-12,
    "homogeneity": 1e-9,
    "bilinearity": 1e-9,
    "extraction": 1e-8,
    "quadratic": 1e-6,
    "christoffel": 1e-5,
    "transformation": 1e-8,
    "pushforward": 1e-8,
    "regularity": 1e-6,
    "cocycle": 1e-9,
    "cd-axioms": 1e-8,
    "nabla-k": 1e-9,
    "roundtrip": 1e-12,
    "conjugacy": 1e-8,
    "conjugate-pair": 1e-9,
    "linearity": 1e-8,
    "witness": 1e-3,
    "induced": 1e-12,
    "reparam": 1e-7,
    "reversal": 1e-6,
    "energy": 1e-6,
    "geodesic-exact": 1e-6,
    "truncation": 1e-8,
    "splitting": 1e-9,
    "fields": 1e-8,
}
"""Named tolerances, overridable with --tol key=value"""

# =============================================================================
# Geodesic Constants
# =============================================================================

METHOD_RK4 = "rk4"
METHOD_EULER = "euler"
METHODS = (METHOD_RK4, METHOD_EULER)

CHART_SWITCH_THRESHOLD: float = 0.1
"""Switch chart once the domain predicate drops below this value"""

DEFAULT_STEP: float = 1e-3
DEFAULT_T1: float = 1.0

ORDER_STEPS: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3)
"""Step sizes of the RK4 order estimate"""

ORDER_RATIO_BAND: tuple[float, float] = (8.0, 32.0)
"""Accepted error ratio per halving (16 within a factor 2)"""

ORDER_NOISE_FLOOR: float = 1e-13
"""Errors below this are treated as exact (order estimate skipped)"""

ENERGY_ORDER_RATIO: float = 16.0
"""Expected RK4 energy drift ratio per halving of the step"""

ENERGY_ORDER_SLACK: float = 0.2
"""Accepted relative deviation from ENERGY_ORDER_RATIO"""

# =============================================================================
# Configuration
# =============================================================================

CATALOG_ENV: str = "SPRAYGEOM_CATALOG_DIR"
"""Environment variable overriding the catalog directory"""

CATALOG_SUFFIX: str = ".yaml"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2

SEMINORM_SUP = "sup"
SEMINORM_WEIGHTED = "weighted-sup"
SEMINORMS = (SEMINORM_SUP, SEMINORM_WEIGHTED)

SPRAY_KINDS = ("S2", "B", "metric")

SPRAY_BASE = "base"
SPRAY_FLAT = "flat"
SPRAY_PUSHFORWARD = "pushforward"
SPRAY_NAMES = (SPRAY_BASE, SPRAY_FLAT, SPRAY_PUSHFORWARD)
