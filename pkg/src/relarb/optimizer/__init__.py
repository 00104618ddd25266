"""Shape-constrained optimization of two-asset generated portfolios on a grid."""

from .brute import brute_force_solve
from .consistency import ConsistencyReport, consistency_experiment
from .extension import RegimeExitWarning, polyhedral_extension
from .problem import (
    ConstraintSet,
    DecisionVars,
    Grid,
    GridSolution,
    Problem,
    Residuals,
    build_problem,
    equal_weight_vars,
    feasibility_residuals,
    market_vars,
    objective,
    objective_and_gradient,
)
from .solver import SolverConfig, repair, solve

__all__ = [
    "ConsistencyReport",
    "ConstraintSet",
    "DecisionVars",
    "Grid",
    "GridSolution",
    "Problem",
    "RegimeExitWarning",
    "Residuals",
    "SolverConfig",
    "brute_force_solve",
    "build_problem",
    "consistency_experiment",
    "equal_weight_vars",
    "feasibility_residuals",
    "market_vars",
    "objective",
    "objective_and_gradient",
    "polyhedral_extension",
    "repair",
    "solve",
]
