"""scikit-learn style wrappers."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fgp import l_divergence
from .intensity import JumpSample
from .optimizer import ConstraintSet, Grid, SolverConfig, build_problem, polyhedral_extension, solve
from .simplex import weights_from_capitalizations


def _as_sample(X, sample_weight=None):
    if isinstance(X, JumpSample):
        if sample_weight is not None:
            raise ValueError("sample_weight cannot be combined with a JumpSample")
        return X
    X = check_array(X, dtype=float)
    if X.shape[1] == 2:
        p1, q1 = X[:, 0], X[:, 1]
        p, q = np.column_stack([p1, 1 - p1]), np.column_stack([q1, 1 - q1])
    elif X.shape[1] == 4:
        p, q = X[:, :2], X[:, 2:]
    else:
        raise ValueError("X must have columns (p_1, q_1) or (p_1, p_2, q_1, q_2)")
    w = None
    if sample_weight is not None:
        w = np.asarray(sample_weight, dtype=float)
        w = w / w.sum()
    return JumpSample(p, q, w)


class FGPortfolioOptimizer(BaseEstimator):
    """Optimized two-asset generated portfolio fitted to jump pairs.

    Parameters
    ----------
    grid_lo, grid_hi, grid_step : float
        Grid of asset-1 market weights.
    ratio_bounds, weight_bounds : pair, optional
        See :class:`relarb.optimizer.ConstraintSet`.
    monotone : bool
    tol, stat_tol, max_outer, max_inner, n_perturbed
        Solver settings, see :class:`relarb.optimizer.SolverConfig`.
    random_state : int
        Seed of the perturbed start.
    outside : {"extend", "hold"}
        Behaviour of :meth:`predict` outside the grid range.

    Attributes
    ----------
    grid_ : Grid
    solution_ : GridSolution
    z_, phi_ : ndarray
    objective_ : float
    pair_ : FGPair
        Polyhedral extension of the solution.
    """

    def __init__(self, grid_lo=0.1, grid_hi=0.3, grid_step=0.001, ratio_bounds=(0.5, 2.0), weight_bounds=None,
                 monotone=True, tol=1e-8, stat_tol=1e-6, max_outer=40, max_inner=3000, n_perturbed=1,
                 random_state=0, outside="extend"):
        self.grid_lo = grid_lo
        self.grid_hi = grid_hi
        self.grid_step = grid_step
        self.ratio_bounds = ratio_bounds
        self.weight_bounds = weight_bounds
        self.monotone = monotone
        self.tol = tol
        self.stat_tol = stat_tol
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.n_perturbed = n_perturbed
        self.random_state = random_state
        self.outside = outside

    def _config(self):
        return SolverConfig(tol=self.tol, stat_tol=self.stat_tol, max_outer=self.max_outer,
                            max_inner=self.max_inner, n_perturbed=self.n_perturbed, seed=self.random_state)

    def fit(self, X, y=None, sample_weight=None):
        """Solve the grid problem on the jump pairs in ``X``.

        ``X`` is a JumpSample or an array with columns ``(p_1, q_1)`` or
        ``(p_1, p_2, q_1, q_2)``.
        """
        sample = _as_sample(X, sample_weight)
        self.grid_ = Grid.from_range(self.grid_lo, self.grid_hi, self.grid_step)
        cons = ConstraintSet(self.ratio_bounds, self.weight_bounds, self.monotone)
        self.problem_ = build_problem(sample, self.grid_, cons)
        self.solution_ = solve(self.problem_, self._config())
        self.z_ = self.solution_.z
        self.phi_ = self.solution_.phi
        self.objective_ = self.solution_.objective
        self.pair_ = polyhedral_extension(self.solution_, outside=self.outside, warn=False)
        self.n_features_in_ = 2 if not isinstance(X, JumpSample) and np.shape(X)[1] == 2 else 4
        return self

    def predict(self, X):
        """Portfolio weights, shape (k, 2), at market weights ``X``.

        ``X`` is either shape (k, 2) or a vector of asset-1 weights.
        """
        check_is_fitted(self, "solution_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = np.column_stack([X, 1 - X])
        X = check_array(X, dtype=float)
        return self.pair_.portfolio(X)

    def score(self, X, y=None, sample_weight=None):
        """Weighted mean L-divergence of the fitted pair on jump pairs ``X``."""
        check_is_fitted(self, "solution_")
        sample = _as_sample(X, sample_weight)
        t = l_divergence(self.pair_, sample.q, sample.p, strict=False)
        return float(np.sum(sample.weights * t))


class MarketWeights(TransformerMixin, BaseEstimator):
    """Stateless transformer from capitalizations to market weights."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return weights_from_capitalizations(X).points
