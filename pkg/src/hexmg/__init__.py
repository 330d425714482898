"""Matrix-free high-order hexahedral hyperelasticity with p-multigrid preconditioning."""

from .assembly import assemble, coo_numeric, coo_preallocate, coo_symbolic, coo_values
from .basis import build_lagrange_basis
from .config import ProblemConfig, load_config, parse_config_text
from .errors import (ConfigError, DegenerateElementError, HexmgError, IndefiniteOperatorError,
                     InvertedElementError, LineSearchError, NotSPDError, SolverError)
from .krylov import ChebyshevSmoother, cg_solve, estimate_lambda_max
from .material import NeoHookean, lame_from_young_poisson
from .mesh import BoundaryCondition, build_box_mesh, build_restriction
from .multigrid import build_hierarchy, v_cycle
from .nonlinear import NewtonConfig, lbfgs_solve, load_continuation, newton_solve
from .operator import HyperelasticOperator, JacobianOperator

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition", "ChebyshevSmoother", "ConfigError", "DegenerateElementError",
    "HexmgError", "HyperelasticOperator", "IndefiniteOperatorError", "InvertedElementError",
    "JacobianOperator", "LineSearchError", "NeoHookean", "NewtonConfig", "NotSPDError",
    "ProblemConfig", "SolverError", "assemble", "build_box_mesh", "build_hierarchy",
    "build_lagrange_basis", "build_restriction", "cg_solve", "coo_numeric", "coo_preallocate",
    "coo_symbolic", "coo_values", "estimate_lambda_max", "lame_from_young_poisson",
    "lbfgs_solve", "load_config", "load_continuation", "newton_solve", "parse_config_text",
    "v_cycle", "__version__",
]
