"""Grid discretization of the two-asset portfolio optimization problem.

Decision variables are the asset-1 weights ``z_j`` at the interior grid
points and the generating function values ``phi_j`` at all grid points
including the endpoints 0 and 1. The objective is the sample average of
the L-divergence

    T = log(1 + (q - p) (z_p - p) / (p (1 - p))) - log(phi_q / phi_p)

with ``p``, ``q`` the asset-1 market weights of a jump.
"""

from dataclasses import dataclass, field

import numpy as np

from ..io import to_jsonable

PHI_MIN = 1e-8
LOG_MARGIN = 1e-10


class Grid:
    """Interior grid points ``0 < x_1 < ... < x_m < 1``."""

    def __init__(self, x, decimals=None):
        x = np.asarray(x, dtype=float).ravel()
        if len(x) == 0:
            raise ValueError("grid needs at least one point")
        if x[0] <= 0 or x[-1] >= 1:
            raise ValueError("grid points must lie strictly inside (0, 1)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("grid points must be strictly increasing")
        self.x = x
        self.decimals = decimals

    @classmethod
    def from_range(cls, lo, hi, step):
        """Evenly spaced grid from ``lo`` to ``hi`` inclusive."""
        if step <= 0 or hi < lo:
            raise ValueError("need step > 0 and hi >= lo")
        k = int(round((hi - lo) / step)) + 1
        decimals = max(0, int(np.ceil(-np.log10(step) - 1e-9)))
        return cls(np.round(lo + step * np.arange(k), decimals + 3), decimals)

    @property
    def m(self):
        return len(self.x)

    @property
    def full(self):
        """Nodes ``x_0 = 0, x_1, ..., x_m, x_{m+1} = 1``."""
        return np.concatenate([[0.0], self.x, [1.0]])

    @property
    def resolution(self):
        return float(np.min(np.diff(self.full)))

    def locate(self, values):
        """Nearest interior grid index and the distance to it."""
        values = np.asarray(values, dtype=float)
        k = np.clip(np.searchsorted(self.x, values), 1, max(self.m - 1, 1))
        if self.m == 1:
            k = np.zeros_like(k)
        else:
            left = np.abs(values - self.x[k - 1]) <= np.abs(values - self.x[k])
            k = np.where(left, k - 1, k)
        return k, np.abs(values - self.x[k])

    def __len__(self):
        return self.m

    def __repr__(self):
        return f"Grid(m={self.m}, x_1={self.x[0]:g}, x_m={self.x[-1]:g})"


def _pair(b, name):
    if b is None:
        return None
    b = tuple(float(v) for v in b)
    if len(b) != 2 or b[0] > b[1]:
        raise ValueError(f"{name} must be (lower, upper) with lower <= upper")
    return b


@dataclass
class ConstraintSet:
    """Constraints on the portfolio at the grid points.

    Parameters
    ----------
    ratio_bounds : pair or pair of pairs, optional
        ``(m_i, M_i)`` bounds on the weight ratio ``pi_i / p_i``. A single
        pair applies to both assets.
    weight_bounds : pair or pair of pairs, optional
        ``(a_i, b_i)`` bounds on the weights themselves.
    monotone : bool
        Require the asset-1 weight to be nondecreasing in its market weight.
    tracking : (Sigma, eps), optional
        Experimental: ``(pi - p)' Sigma (pi - p) <= eps**2``.
    """

    ratio_bounds: tuple = None
    weight_bounds: tuple = None
    monotone: bool = False
    tracking: tuple = None

    def __post_init__(self):
        self.ratio_bounds = self._per_asset(self.ratio_bounds, "ratio_bounds")
        self.weight_bounds = self._per_asset(self.weight_bounds, "weight_bounds")
        if self.ratio_bounds is not None and any(lo < 0 for lo, _ in self.ratio_bounds):
            raise ValueError("ratio bounds must be nonnegative")
        if self.tracking is not None:
            sigma, eps = self.tracking
            sigma = np.asarray(sigma, dtype=float)
            if sigma.shape != (2, 2) or eps <= 0:
                raise ValueError("tracking needs a 2x2 covariance matrix and eps > 0")
            self.tracking = (sigma, float(eps))

    @staticmethod
    def _per_asset(b, name):
        if b is None:
            return None
        b = list(b)
        if len(b) == 2 and np.isscalar(b[0]):
            pr = _pair(b, name)
            return (pr, pr)
        if len(b) != 2:
            raise ValueError(f"{name} needs one pair or one pair per asset")
        return (_pair(b[0], name), _pair(b[1], name))

    def z_bounds(self, x):
        """Interval ``[lo_j, hi_j]`` for ``z_j`` implied by the box-type constraints."""
        x = np.asarray(x, dtype=float)
        lo, hi = np.zeros_like(x), np.ones_like(x)
        if self.ratio_bounds is not None:
            (m1, M1), (m2, M2) = self.ratio_bounds
            lo = np.maximum(lo, np.maximum(m1 * x, 1 - M2 * (1 - x)))
            hi = np.minimum(hi, np.minimum(M1 * x, 1 - m2 * (1 - x)))
        if self.weight_bounds is not None:
            (a1, b1), (a2, b2) = self.weight_bounds
            lo = np.maximum(lo, np.maximum(a1, 1 - b2))
            hi = np.minimum(hi, np.minimum(b1, 1 - a2))
        if self.tracking is not None:
            sigma, eps = self.tracking
            var = sigma[0, 0] - 2 * sigma[0, 1] + sigma[1, 1]
            if var > 0:
                r = eps / np.sqrt(var)
                lo, hi = np.maximum(lo, x - r), np.minimum(hi, x + r)
        return lo, hi

    def to_dict(self):
        out = {"ratio_bounds": self.ratio_bounds, "weight_bounds": self.weight_bounds, "monotone": self.monotone}
        if self.tracking is not None:
            out["tracking"] = {"sigma": self.tracking[0], "eps": self.tracking[1]}
        return to_jsonable(out)

    @classmethod
    def from_dict(cls, d):
        tr = d.get("tracking")
        return cls(d.get("ratio_bounds"), d.get("weight_bounds"), bool(d.get("monotone", False)),
                   None if tr is None else (tr["sigma"], tr["eps"]))


@dataclass
class DecisionVars:
    """``z`` has length m, ``phi`` length m + 2 (endpoints included)."""

    z: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != (len(self.z) + 2,):
            raise ValueError("phi must have two more entries than z")

    def slopes(self, grid):
        return np.diff(self.phi) / np.diff(grid.full)

    def copy(self):
        return DecisionVars(self.z.copy(), self.phi.copy())


def market_vars(grid):
    return DecisionVars(grid.x.copy(), np.ones(grid.m + 2))


def equal_weight_vars(grid):
    xf = grid.full
    phi = np.sqrt(xf * (1 - xf)) / np.sqrt(grid.x[0] * (1 - grid.x[0]))
    return DecisionVars(np.full(grid.m, 0.5), phi)


@dataclass
class Problem:
    """Deduplicated jump records on a grid with their constraint set.

    ``ip`` and ``iq`` index the interior grid points ``x`` and ``w`` holds
    the aggregated sample weights.
    """

    grid: Grid
    constraints: ConstraintSet
    ip: np.ndarray
    iq: np.ndarray
    w: np.ndarray
    n_pairs: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_records(self):
        return len(self.w)

    def p_mass(self):
        """Sample mass of the starting point ``p`` at each grid point."""
        return np.bincount(self.ip, weights=self.w, minlength=self.grid.m)


def build_problem(sample, grid, constraints=None):
    """Map a two-asset jump sample onto ``grid``.

    Every ``p_1`` and ``q_1`` must lie within half the grid resolution of
    a grid point. Duplicate index pairs are merged, summing their weights,
    and the merged weights are renormalized to sum to one.
    """
    constraints = constraints if constraints is not None else ConstraintSet()
    if sample.n_assets != 2:
        raise ValueError("the grid optimizer handles two assets only")
    half = grid.resolution / 2 + 1e-12
    ip, dp = grid.locate(sample.p[:, 0])
    iq, dq = grid.locate(sample.q[:, 0])
    off = np.flatnonzero((dp > half) | (dq > half))
    if off.size:
        k = int(off[0])
        raise ValueError(f"pair {k} ({sample.p[k, 0]!r} -> {sample.q[k, 0]!r}) is off the grid")
    key = ip * grid.m + iq
    uniq, inv = np.unique(key, return_inverse=True)
    w = np.bincount(inv, weights=sample.weights)
    # renormalize so equal measures give bit-identical problems
    w = w / w.sum()
    return Problem(grid, constraints, uniq // grid.m, uniq % grid.m, w, len(sample),
                   {"provenance": dict(sample.provenance)})


def _record_terms(problem, z, phi):
    x = problem.grid.x
    xp, xq = x[problem.ip], x[problem.iq]
    coef = (xq - xp) / (xp * (1 - xp))
    g = 1.0 + coef * (z[problem.ip] - xp)
    phi_p, phi_q = phi[problem.ip + 1], phi[problem.iq + 1]
    return coef, g, phi_p, phi_q


def objective_and_gradient(problem, vars):
    """Weighted mean L-divergence and its gradient.

    Returns
    -------
    value : float
    grad : DecisionVars
        Partial derivatives with respect to ``z`` and ``phi``.
    """
    coef, g, phi_p, phi_q = _record_terms(problem, vars.z, vars.phi)
    bad = np.flatnonzero(~(g > LOG_MARGIN))
    if bad.size:
        k = int(bad[0])
        raise ValueError(f"log argument {g[k]!r} <= 0 for record {k} (z at grid index {problem.ip[k]})")
    bad = np.flatnonzero(~(phi_p > 0) | ~(phi_q > 0))
    if bad.size:
        k = int(bad[0])
        raise ValueError(f"phi not positive for record {k} (grid indices {problem.ip[k]}, {problem.iq[k]})")
    w = problem.w
    value = float(np.sum(w * (np.log(g) - np.log(phi_q) + np.log(phi_p))))
    m = problem.grid.m
    gz = np.bincount(problem.ip, weights=w * coef / g, minlength=m)
    gphi = np.bincount(problem.ip + 1, weights=w / phi_p, minlength=m + 2)
    gphi -= np.bincount(problem.iq + 1, weights=w / phi_q, minlength=m + 2)
    return value, DecisionVars(gz, gphi)


def objective(problem, vars):
    return objective_and_gradient(problem, vars)[0]


RESIDUAL_KEYS = ("nonnegativity", "normalization", "concavity", "fg", "monotonicity", "ratio", "box", "tracking")


@dataclass
class Residuals:
    """Maximum violation of each constraint family (0 when satisfied).

    ``first`` gives, per family, the first grid index whose violation
    exceeds 1e-12 (None if there is none).
    """

    values: dict
    first: dict

    def max(self):
        return max(self.values.values())

    def to_dict(self):
        return to_jsonable({"values": self.values, "first": self.first})


def _summarize(viol, offset=0):
    viol = np.maximum(np.asarray(viol, dtype=float), 0.0)
    if viol.size == 0:
        return 0.0, None
    viol = np.where(np.isnan(viol), np.inf, viol)
    big = np.flatnonzero(viol > 1e-12)
    return float(viol.max()), (int(big[0]) + offset if big.size else None)


def feasibility_residuals(vars, grid, constraints=None):
    """Per-family constraint violations, in divided form.

    Families: nonnegativity of ``phi`` (at least ``PHI_MIN`` at interior
    points), ``phi_1 = 1``, concavity of the slopes, the supergradient
    interval for each ``z_j``, monotonicity, ratio bounds, weight bounds
    and the tracking bound.
    """
    constraints = constraints if constraints is not None else ConstraintSet()
    z, phi = vars.z, vars.phi
    x = grid.x
    vals, first = {}, {}
    floor = np.concatenate([[0.0], np.full(grid.m, PHI_MIN), [0.0]])
    vals["nonnegativity"], first["nonnegativity"] = _summarize(floor - phi)
    vals["normalization"], first["normalization"] = abs(float(phi[1]) - 1.0), None
    s = vars.slopes(grid)
    vals["concavity"], first["concavity"] = _summarize(s[1:] - s[:-1], offset=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = x + x * (1 - x) * s[1:] / phi[1:-1]
        upper = x + x * (1 - x) * s[:-1] / phi[1:-1]
    vals["fg"], first["fg"] = _summarize(np.maximum(lower - z, z - upper), offset=1)
    if constraints.monotone and len(z) > 1:
        vals["monotonicity"], first["monotonicity"] = _summarize(z[:-1] - z[1:], offset=1)
    else:
        vals["monotonicity"], first["monotonicity"] = 0.0, None
    if constraints.ratio_bounds is not None:
        (m1, M1), (m2, M2) = constraints.ratio_bounds
        r1, r2 = z / x, (1 - z) / (1 - x)
        viol = np.maximum.reduce([m1 - r1, r1 - M1, m2 - r2, r2 - M2])
        vals["ratio"], first["ratio"] = _summarize(viol, offset=1)
    else:
        vals["ratio"], first["ratio"] = 0.0, None
    if constraints.weight_bounds is not None:
        (a1, b1), (a2, b2) = constraints.weight_bounds
        viol = np.maximum.reduce([a1 - z, z - b1, a2 - (1 - z), (1 - z) - b2])
        vals["box"], first["box"] = _summarize(viol, offset=1)
    else:
        vals["box"], first["box"] = 0.0, None
    if constraints.tracking is not None:
        sigma, eps = constraints.tracking
        var = sigma[0, 0] - 2 * sigma[0, 1] + sigma[1, 1]
        vals["tracking"], first["tracking"] = _summarize(np.sqrt(max(var, 0.0)) * np.abs(z - x) - eps, offset=1)
    else:
        vals["tracking"], first["tracking"] = 0.0, None
    return Residuals(vals, first)


@dataclass
class GridSolution:
    """Solution of the grid problem together with solver diagnostics."""

    grid: Grid
    vars: DecisionVars
    objective: float
    residuals: Residuals
    iterations: int = 0
    start: str = ""
    converged: bool = False
    stationarity: float = float("nan")
    constraints: ConstraintSet = None
    starts: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def z(self):
        return self.vars.z

    @property
    def phi(self):
        return self.vars.phi

    def to_dict(self):
        return to_jsonable({
            "kind": "grid_solution",
            "grid": self.grid.x,
            "z": self.vars.z,
            "phi": self.vars.phi,
            "objective": self.objective,
            "residuals": self.residuals.to_dict(),
            "iterations": self.iterations,
            "start": self.start,
            "converged": self.converged,
            "stationarity": self.stationarity,
            "constraints": None if self.constraints is None else self.constraints.to_dict(),
            "starts": self.starts,
            "meta": self.meta,
        })

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "grid_solution":
            raise ValueError("not a grid solution document")
        grid = Grid(d["grid"])
        cons = None if d.get("constraints") is None else ConstraintSet.from_dict(d["constraints"])
        v = DecisionVars(d["z"], d["phi"])
        res = feasibility_residuals(v, grid, cons)
        return cls(grid, v, float(d["objective"]), res, int(d.get("iterations", 0)), d.get("start", ""),
                   bool(d.get("converged", False)), float(d.get("stationarity", "nan")), cons,
                   list(d.get("starts", [])), dict(d.get("meta", {})))
