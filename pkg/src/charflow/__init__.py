"""charflow: build and numerically certify parameterized stationary solutions
of first-order PDEs H0(x, p, u) = const from user-supplied Hamiltonians.

The pipeline: parse Hamiltonians (expr), build characteristic fields and
Poisson brackets (charfield), test first-integral membership and
finite-type closure of the generator Lie algebra (lie), compose local
flows into orbits (flow), and compute the gradient-system representation
A(lam) with dual vectors q_i that certifies H0 stays constant on the
parameter box (gradsys).  Classical Cauchy-data checks live in stationary;
the CLI in cli.
"""

from .charfield import (
    CharField,
    CheckReport,
    Hamiltonian,
    PhasePoint,
    char_field,
    char_matrix,
    is_first_integral,
    poisson,
    poisson_expr,
    sample_ball,
    symplectic_matrix,
)
from .cli import Problem, ProblemFormatError, load_problem
from .expr import (
    DomainError,
    Expr,
    ParseError,
    VarContext,
    diff,
    evaluate,
    format_expr,
    gradient,
    parse,
    substitute,
)
from .flow import (
    FlowDivergenceError,
    IntegratorConfig,
    Orbit,
    OrbitGrid,
    axis_values,
    flow,
    orbit_grid,
    orbit_point,
)
from .gradsys import (
    GradientRep,
    RankDeficientError,
    StationarityCertificate,
    certify_stationarity,
    lambda_grid,
    lambda_jacobian,
    probe_box,
    representation,
)
from .lie import (
    BaseFamilyReport,
    ClosureReport,
    VectorField,
    check_base_family,
    check_closure,
    cotangent_lift,
    lie_bracket,
)
from .stationary import (
    CauchyData,
    TransversalityReport,
    check_compatibility,
    check_level,
    check_transversality,
    parameter_grid,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # expr
    "Expr",
    "VarContext",
    "ParseError",
    "DomainError",
    "parse",
    "evaluate",
    "diff",
    "gradient",
    "substitute",
    "format_expr",
    # charfield
    "PhasePoint",
    "Hamiltonian",
    "CharField",
    "CheckReport",
    "char_matrix",
    "symplectic_matrix",
    "char_field",
    "poisson",
    "poisson_expr",
    "is_first_integral",
    "sample_ball",
    # lie
    "VectorField",
    "ClosureReport",
    "BaseFamilyReport",
    "lie_bracket",
    "cotangent_lift",
    "check_closure",
    "check_base_family",
    # flow
    "IntegratorConfig",
    "FlowDivergenceError",
    "Orbit",
    "OrbitGrid",
    "flow",
    "orbit_point",
    "orbit_grid",
    "axis_values",
    # gradsys
    "GradientRep",
    "RankDeficientError",
    "StationarityCertificate",
    "lambda_jacobian",
    "representation",
    "certify_stationarity",
    "lambda_grid",
    "probe_box",
    # stationary
    "CauchyData",
    "TransversalityReport",
    "parameter_grid",
    "check_compatibility",
    "check_level",
    "check_transversality",
    # cli
    "Problem",
    "ProblemFormatError",
    "load_problem",
]
