"""Functionally generated portfolios, relative arbitrage diagnostics and optimization."""

from .dominance import (
    asset_one_weight,
    divergence_dominates,
    drift_form,
    integral_condition,
    relative_concavity_transform,
    rmcm_cycle_test,
    taylor_consistency,
    two_asset_aggressiveness,
)
from .exceptions import InfeasibleProblemError, NotConcaveError, RuinError
from .fgp import (
    CATALOG_NAMES,
    DecompositionSeries,
    FGPair,
    GeneratingFunction,
    catalog,
    concave_bound_check,
    fernholz_decompose,
    generated_portfolio,
    generation_gap,
    geometric_blend,
    l_divergence,
    portfolio_from_c2,
    shifted,
)
from .intensity import (
    JumpSample,
    RegionK,
    ReturnHistory,
    bootstrap_paths,
    collect_pairs,
    pairs_from_markov,
    random_walk_sampler,
    recenter_returns,
)
from .simplex import (
    MarketPath,
    PortfolioMap,
    line_integral,
    log_growth_factors,
    market_portfolio,
    relative_value_path,
    weight_ratio,
    weights_from_capitalizations,
)

__version__ = "0.1.0"
