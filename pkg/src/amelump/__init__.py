"""Lumped approximate master equations for contact processes on networks.

Workflow: declare a model (states, rules, degree distribution, initial
fractions), then solve the full master equation, a lumped reduction of it,
or a stochastic ground-truth simulation, and compare trajectories.
"""

from .clustering import Clustering, cluster_degrees, simplex_cell
from .errors import (
    AmelumpError,
    CapExceededError,
    NumericalError,
    RateEvalError,
    RateSyntaxError,
    ValidationError,
)
from .full_ame import FullSystem, build_full_ame
from .lumped_ame import (
    LumpedSystem,
    build_lumped_approx,
    build_lumped_exact,
    initial_lumped_state,
    lump_initial_state,
    unlump_full,
    unlump_globals,
)
from .model import (
    DegreeDistribution,
    ModelSpec,
    StateSet,
    ValidatedModel,
    builtin_model_path,
    load_model,
    model_from_dict,
    multinomial_initial_state,
    powerlaw_distribution,
    validate_model,
)
from .neighborhoods import (
    NeighborhoodIndex,
    ame_equation_count,
    shift,
    size_of_Mk,
    total_size,
)
from .rate_expr import eval_rate, parse_rate
from .solver import (
    SolverConfig,
    Trajectory,
    auto_lump_solve,
    integrate,
    solve_full,
    solve_lumped,
    sweep,
    trajectory_distance,
)

__all__ = [
    "AmelumpError",
    "CapExceededError",
    "Clustering",
    "DegreeDistribution",
    "FullSystem",
    "LumpedSystem",
    "ModelSpec",
    "NeighborhoodIndex",
    "NumericalError",
    "RateEvalError",
    "RateSyntaxError",
    "SolverConfig",
    "StateSet",
    "Trajectory",
    "ValidatedModel",
    "ValidationError",
    "ame_equation_count",
    "auto_lump_solve",
    "build_full_ame",
    "build_lumped_approx",
    "build_lumped_exact",
    "builtin_model_path",
    "cluster_degrees",
    "eval_rate",
    "initial_lumped_state",
    "integrate",
    "load_model",
    "lump_initial_state",
    "model_from_dict",
    "multinomial_initial_state",
    "parse_rate",
    "powerlaw_distribution",
    "shift",
    "simplex_cell",
    "size_of_Mk",
    "solve_full",
    "solve_lumped",
    "sweep",
    "total_size",
    "trajectory_distance",
    "unlump_full",
    "unlump_globals",
    "validate_model",
]

__version__ = "0.1.0"
