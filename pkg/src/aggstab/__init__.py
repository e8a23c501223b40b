"""Stability analysis and simulation of a size-structured aggregation-growth
population model.

The package decides local asymptotic stability of the zero solution from the
sign of a scalar characteristic function, and cross-validates the prediction
by direct simulation of the explicit linear semigroup and of the full
nonlinear integro-PDE.
"""

from .expr import EvalDomainError, ExpressionError, ParseError, parse
from .model import CoefficientSet, ValidationReport, coefficients, validate
from .operators import (
    StateVector,
    boundary_inflow,
    coagulation,
    coagulation_split,
    frechet_apply,
    kernel_sup,
    linear_apply,
    moments,
)
from .quad import CumulativeTable, Mesh, build_mesh, cumulative, integrate, inverse
from .semigroup import (
    BoundaryFluxHistory,
    CausalityError,
    decay_rate_linear,
    evolve_linear,
    flux_history,
)
from .simulator import (
    SimulationConfig,
    SimulationTrace,
    default_bump,
    estimate_rate,
    initial_state,
    run,
    step,
)
from .spectral import (
    Classification,
    Eigenfunction,
    SpectralReport,
    classify,
    eigenfunction,
    find_spectral_bound,
    resolvent_apply,
    xi,
    xi_grid,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "parse", "ExpressionError", "ParseError", "EvalDomainError",
    "CoefficientSet", "coefficients", "validate", "ValidationReport",
    "Mesh", "CumulativeTable", "build_mesh", "integrate", "cumulative", "inverse",
    "Classification", "SpectralReport", "Eigenfunction",
    "xi", "xi_grid", "find_spectral_bound", "classify", "eigenfunction",
    "resolvent_apply",
    "StateVector", "boundary_inflow", "coagulation", "coagulation_split",
    "frechet_apply", "linear_apply", "moments", "kernel_sup",
    "BoundaryFluxHistory", "CausalityError", "evolve_linear", "flux_history",
    "decay_rate_linear",
    "SimulationConfig", "SimulationTrace", "default_bump", "initial_state",
    "step", "run", "estimate_rate",
]
