"""Augmented Lagrangian solver with multi-start for the grid problem.

Internally the generating function is written as

    psi(x) = (1 - x) a + x b + sum_k d_k G(x, x_k),   a, b, d >= 0,

with ``G(x, t) = min(x (1 - t), t (1 - x))``, so ``d_k`` is the drop in
slope at ``x_k``. Every such ``psi`` is concave and nonnegative on [0, 1]
and every concave piecewise linear function on the grid has this form.
The weight at ``x_j`` is ``z_j = x_j + x_j (1 - x_j) u_j / psi_j`` with
``u_j = s_j + theta_j d_j`` and ``theta_j`` in [0, 1], which places
``u_j`` inside the supergradient interval. Concavity and the
supergradient conditions thus become simple bounds, handled by the
projected quasi-Newton inner solver, and only the weight bounds and
monotonicity go through the augmented Lagrangian. The objective does not
depend on the scale of ``psi``; a quadratic penalty pins ``psi_1 = 1``.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.isotonic import isotonic_regression

from ..exceptions import InfeasibleProblemError
from .problem import (
    PHI_MIN,
    DecisionVars,
    GridSolution,
    equal_weight_vars,
    feasibility_residuals,
    market_vars,
    objective_and_gradient,
)

_DEBUG = bool(os.environ.get("RELARB_DEBUG"))


@dataclass
class SolverConfig:
    """Settings for :func:`solve`.

    tol : feasibility tolerance on the reported residuals.
    stat_tol : first-order stationarity tolerance (scaled units).
    max_outer, max_inner : iteration caps for the multiplier loop and the
        inner bound-constrained solves.
    rho0, rho_growth, rho_max : penalty schedule; the penalty grows when
        the violation fails to drop by ``shrink``.
    seed : seeds the perturbed start.
    n_perturbed : number of perturbed starts.
    """

    tol: float = 1e-8
    stat_tol: float = 1e-6
    max_outer: int = 40
    max_inner: int = 3000
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e8
    shrink: float = 0.25
    seed: int = 0
    n_perturbed: int = 1
    kappa: float = 1.0

    def to_dict(self):
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# repair to exact feasibility


def _upper_concave_hull(x, y):
    # monotone chain over points sorted by x
    hull = [0]
    for i in range(1, len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(x, x[hull], y[hull])


def z_intervals(phi, grid, constraints):
    """Feasible interval for each ``z_j`` given ``phi``."""
    x = grid.x
    s = np.diff(phi) / np.diff(grid.full)
    lower = x + x * (1 - x) * s[1:] / phi[1:-1]
    upper = x + x * (1 - x) * s[:-1] / phi[1:-1]
    lo, hi = constraints.z_bounds(x)
    return np.maximum(lower, lo), np.minimum(upper, hi)


def _target_z(z, a, b, monotone):
    if monotone and len(z) > 1:
        A = np.maximum.accumulate(a)
        B = np.minimum.accumulate(b[::-1])[::-1]
        return np.clip(isotonic_regression(z), A, np.maximum(A, B))
    return np.clip(z, a, np.maximum(a, b))


def _repair_hull(vars, grid, constraints):
    phi = np.maximum(vars.phi, np.concatenate([[0.0], np.full(grid.m, PHI_MIN), [0.0]]))
    phi = _upper_concave_hull(grid.full, phi)
    phi = phi / phi[1]
    phi[1] = 1.0
    a, b = z_intervals(phi, grid, constraints)
    return DecisionVars(_target_z(vars.z, a, b, constraints.monotone), phi)


def _compatible_z(z, x, h, lo, hi, monotone):
    # some concave phi supports z iff k_j <= k_{j-1} / (1 + h_j k_{j-1}) for all j;
    # lower offending z_j where the bounds allow, then raise z_{j-1} walking back
    z = z.copy()
    xx = x * (1 - x)
    for j in range(1, len(z)):
        kp = (z[j - 1] - x[j - 1]) / xx[j - 1]
        zc = x[j] + xx[j] * kp / (1.0 + h[j] * kp)
        if monotone:
            zc = max(zc, z[j - 1])
        if z[j] > zc >= lo[j]:
            z[j] = zc
    for j in range(len(z) - 1, 0, -1):
        kj = (z[j] - x[j]) / xx[j]
        den = 1.0 - h[j] * kj
        if den <= 0:
            continue
        zc = x[j - 1] + xx[j - 1] * kj / den
        if z[j - 1] < zc <= hi[j - 1]:
            z[j - 1] = zc
    return z


def _repair_forward(vars, grid, constraints):
    # fix z first, then rebuild phi segment by segment: with k_j the log
    # slope that z_j requires, the supergradient conditions at both ends of
    # segment j pin s_j / phi_j to [k_{j+1} / (1 - h_j k_{j+1}), k_j]
    x, xf = grid.x, grid.full
    h = np.diff(xf)
    lo, hi = constraints.z_bounds(x)
    z = _compatible_z(_target_z(vars.z, lo, hi, constraints.monotone), x, h, lo, hi, constraints.monotone)
    k = (z - x) / (x * (1 - x))
    ref = np.diff(vars.phi) / h / np.where(vars.phi[:-1] > 0, vars.phi[:-1], 1.0)
    m = grid.m
    phi = np.empty(m + 2)
    phi[1] = 1.0
    for j in range(1, m):
        den = 1.0 - h[j] * k[j]
        if den <= 0:
            return None
        r_lo, r_hi = k[j] / den, k[j - 1]
        r = min(max(ref[j], r_lo), r_hi) if r_lo <= r_hi else r_hi
        phi[j + 1] = phi[j] * (1.0 + h[j] * r)
    s0 = min(max((vars.phi[1] - vars.phi[0]) / h[0] / max(vars.phi[1], 1e-300), k[0]), 1.0 / x[0])
    phi[0] = max(1.0 - x[0] * s0, 0.0)
    sm_ratio = min(max(ref[m], -1.0 / (1 - x[-1])), k[-1])
    phi[m + 1] = max(phi[m] * (1.0 + (1 - x[-1]) * sm_ratio), 0.0)
    if not np.all(phi[1:-1] > 0):
        return None
    return DecisionVars(z, phi)


def repair(vars, grid, constraints):
    """Move ``vars`` onto the feasible set where possible.

    Two candidates are formed. One replaces ``phi`` by the upper concave
    hull of its clipped values and projects ``z`` into the intervals that
    ``phi`` leaves. The other first projects ``z`` onto the weight bounds
    (and the monotone cone), nudges it so that consecutive values admit a
    common concave ``phi`` and rebuilds ``phi`` around it, staying close
    to the original log slopes. The candidate with the smaller residual
    is returned; the caller must still check the residuals.
    """
    best, best_r = None, np.inf
    for fn in (_repair_forward, _repair_hull):
        with np.errstate(all="ignore"):
            cand = fn(vars, grid, constraints)
            if cand is None:
                continue
            r = feasibility_residuals(cand, grid, constraints).max()
        if r < best_r:
            best, best_r = cand, r
    return best


# ---------------------------------------------------------------------------
# internal parametrization


class _Param:
    def __init__(self, grid):
        self.grid = grid
        xf = grid.full
        self.x = grid.x
        self.h = np.diff(xf)
        m = grid.m
        G = np.minimum(xf[:, None] * (1 - self.x[None, :]), self.x[None, :] * (1 - xf[:, None]))
        self.M = np.column_stack([1 - xf, xf, G])  # psi on all nodes from (a, b, d)
        self.S = np.diff(self.M, axis=0) / self.h[:, None]  # slopes s_0..s_m
        self.m = m
        self.fac = self.x * (1 - self.x)

    @property
    def n(self):
        return 2 * self.m + 2

    def bounds(self):
        return [(0.0, None)] * (self.m + 2) + [(0.0, 1.0)] * self.m

    def forward(self, y):
        m = self.m
        abd, theta = y[: m + 2], y[m + 2:]
        d = abd[2:]
        psi = self.M @ abd
        s = self.S @ abd
        u = s[1:] + theta * d
        z = self.x + self.fac * u / psi[1:-1]
        return psi, u, z

    def backward(self, y, psi, u, gz, gpsi_int):
        m = self.m
        theta, d = y[m + 2:], y[2: m + 2]
        pi = psi[1:-1]
        gu = gz * self.fac / pi
        gp = gpsi_int - gz * self.fac * u / pi**2
        g_abd = self.M[1:-1].T @ gp + self.S[1:].T @ gu
        g_abd[2:] += gu * theta
        return np.concatenate([g_abd, gu * d])

    def from_vars(self, vars):
        phi = vars.phi
        s = np.diff(phi) / self.h
        d = np.maximum(s[:-1] - s[1:], 0.0)
        u = phi[1:-1] * (vars.z - self.x) / self.fac
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(d > 1e-14, (u - s[1:]) / d, 0.5)
        theta = np.clip(np.nan_to_num(theta, nan=0.5), 0.0, 1.0)
        return np.concatenate([[max(phi[0], 0.0), max(phi[-1], 0.0)], d, theta])

    def to_vars(self, y):
        psi, _, z = self.forward(y)
        return DecisionVars(z, psi / psi[1])


class _Constraints:
    """Weight bounds and monotonicity as ``c(z) >= 0``."""

    def __init__(self, grid, constraints):
        lo, hi = constraints.z_bounds(grid.x)
        self.lo_idx = np.flatnonzero(lo > 0)
        self.hi_idx = np.flatnonzero(hi < 1)
        self.lo, self.hi = lo[self.lo_idx], hi[self.hi_idx]
        self.mono = bool(constraints.monotone and grid.m > 1)
        self.m = grid.m

    @property
    def size(self):
        return len(self.lo_idx) + len(self.hi_idx) + (self.m - 1 if self.mono else 0)

    def value(self, z):
        parts = [z[self.lo_idx] - self.lo, self.hi - z[self.hi_idx]]
        if self.mono:
            parts.append(np.diff(z))
        return np.concatenate(parts)

    def vjp(self, lam):
        """``J^T lam`` with respect to ``z``."""
        g = np.zeros(self.m)
        k1 = len(self.lo_idx)
        k2 = k1 + len(self.hi_idx)
        np.add.at(g, self.lo_idx, lam[:k1])
        np.add.at(g, self.hi_idx, -lam[k1:k2])
        if self.mono:
            lm = lam[k2:]
            g[1:] += lm
            g[:-1] -= lm
        return g


@dataclass
class _Run:
    label: str
    vars: DecisionVars
    objective: float
    residual: float
    iterations: int
    converged: bool
    stationarity: float
    start_objective: float


def _eval_f(problem, par, y):
    psi, u, z = par.forward(y)
    val, g = objective_and_gradient(problem, DecisionVars(z, psi))
    return val, psi, u, z, g


def _augmented_lagrangian(problem, par, cons, y0, cfg):
    lb = np.array([b[0] for b in par.bounds()])
    ub = np.array([np.inf if b[1] is None else b[1] for b in par.bounds()])
    y = np.clip(y0, lb, ub)
    val0, psi, u, z, g = _eval_f(problem, par, y)
    gy = par.backward(y, psi, u, g.z, g.phi[1:-1])
    sigma = max(float(np.max(np.abs(gy))), 1e-8)
    lam = np.zeros(cons.size)
    rho = cfg.rho0
    kappa = cfg.kappa
    total_iter = 0
    prev_viol = np.inf
    stat = np.inf
    converged = False

    def merit(yv, lam, rho, exact=False):
        psi = par.M[1:-1] @ yv[: par.m + 2]
        if not np.min(psi) > 1e-12:
            # only reachable by a trial step collapsing psi; reject it
            return 1e30, -np.ones_like(yv)
        val, psi, u, z, g = _eval_f(problem, par, yv)
        c = cons.value(z)
        # exact=True gives the plain Lagrangian gradient with multipliers lam
        mu = lam if exact else np.maximum(0.0, lam - rho * c)
        pen = 0.5 * kappa * (psi[1] - 1.0) ** 2
        F = -val / sigma + pen + (np.sum(mu**2) - np.sum(lam**2)) / (2 * rho)
        gz = -g.z / sigma - cons.vjp(mu)
        gp = -g.phi[1:-1] / sigma
        gp[0] += kappa * (psi[1] - 1.0)
        return F, par.backward(yv, psi, u, gz, gp)

    for k in range(cfg.max_outer):
        inner_tol = max(0.1 * cfg.stat_tol, 1e-3 * 0.1**k)
        res = minimize(merit, y, args=(lam, rho), jac=True, method="L-BFGS-B", bounds=par.bounds(),
                       options={"maxiter": cfg.max_inner, "gtol": inner_tol, "ftol": 1e-16, "maxcor": 20})
        y = np.clip(res.x, lb, ub)
        total_iter += int(res.nit)
        _, psi, u, z, _ = _eval_f(problem, par, y)
        c = cons.value(z)
        viol = float(np.max(np.maximum(-c, 0.0))) if c.size else 0.0
        lam = np.maximum(0.0, lam - rho * c)
        # stationarity of the Lagrangian with the updated multipliers
        _, grad = merit(y, lam, rho, exact=True)
        pg = float(np.max(np.abs(y - np.clip(y - grad, lb, ub))))
        comp = float(np.max(np.abs(lam * c))) if c.size else 0.0
        stat = max(pg, comp)
        if _DEBUG:
            print(f"outer {k}: nit={res.nit} viol={viol:.2e} pg={pg:.2e} comp={comp:.2e} rho={rho:.1e} {res.message}")
        if viol <= cfg.tol and stat <= cfg.stat_tol:
            converged = True
            break
        # the final repair removes violations below tol, so only push harder above it
        if viol > cfg.tol and viol > cfg.shrink * prev_viol:
            rho = min(rho * cfg.rho_growth, cfg.rho_max)
        prev_viol = max(viol, 1e-300)
    return y, total_iter, converged, stat


def _finish(problem, vars, label, iterations, converged, stat, start_obj):
    grid, cons = problem.grid, problem.constraints
    fixed = repair(vars, grid, cons)
    res = feasibility_residuals(fixed, grid, cons)
    obj = objective_and_gradient(problem, fixed)[0]
    ok = converged and res.max() <= 1e-8
    return _Run(label, fixed, obj, res.max(), iterations, ok, stat, start_obj)


def _equal_weight_start(problem):
    grid, cons = problem.grid, problem.constraints
    eq = equal_weight_vars(grid)

    def blend(lam):
        return DecisionVars(lam * 0.5 + (1 - lam) * grid.x, eq.phi**lam)

    def feasible(lam):
        v = blend(lam)
        with np.errstate(all="ignore"):
            r = feasibility_residuals(v, grid, cons)
        return r.max() <= 1e-10

    if feasible(1.0):
        return blend(1.0), 1.0
    if not feasible(0.0):
        return None, None
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if feasible(mid) else (lo, mid)
    return blend(lo), lo


def _constant_weight_fallback(problem):
    grid, cons = problem.grid, problem.constraints
    xf = grid.full
    best = None
    for c in np.linspace(0.01, 0.99, 99):
        for lam in np.linspace(1.0, 0.0, 21):
            with np.errstate(divide="ignore"):
                phi = np.exp(lam * (c * np.log(xf) + (1 - c) * np.log1p(-xf)))
            phi = phi / phi[1]
            v = DecisionVars(lam * c + (1 - lam) * grid.x, phi)
            if feasibility_residuals(v, grid, cons).max() <= 1e-10:
                obj = objective_and_gradient(problem, v)[0]
                if best is None or obj > best[1]:
                    best = (v, obj, f"constant-weight fallback (c={c:.2f}, lambda={lam:.2f})")
                break
    return best


def solve(problem, config=None):
    """Maximize the average L-divergence over the grid problem.

    Runs the augmented Lagrangian from the market start, the
    equal-weight start (blended toward the market as far as needed for
    feasibility) and ``n_perturbed`` seeded perturbations. Each result is
    repaired to exact feasibility. The start points themselves also
    compete, so the returned objective is never below that of a feasible
    start.

    Raises
    ------
    InfeasibleProblemError
        If no feasible point is found.
    """
    cfg = config if config is not None else SolverConfig()
    grid, cons_set = problem.grid, problem.constraints
    lo, hi = cons_set.z_bounds(grid.x)
    if np.any(lo > hi):
        j = int(np.argmax(lo > hi))
        raise InfeasibleProblemError(f"weight bounds are contradictory at grid point {j + 1} (x = {grid.x[j]:g})")
    if cons_set.monotone and np.any(np.maximum.accumulate(lo) > np.minimum.accumulate(hi[::-1])[::-1]):
        raise InfeasibleProblemError("weight bounds leave no nondecreasing choice of weights")

    par = _Param(grid)
    cons = _Constraints(grid, cons_set)
    starts = []
    mk = repair(market_vars(grid), grid, cons_set)
    if feasibility_residuals(mk, grid, cons_set).max() <= cfg.tol:
        starts.append(("market", mk))
    eq, lam = _equal_weight_start(problem)
    if eq is not None:
        starts.append((f"equal-weight (lambda={lam:.6g})", repair(eq, grid, cons_set)))
    if not starts:
        fb = _constant_weight_fallback(problem)
        if fb is None:
            raise InfeasibleProblemError("no feasible starting point found on this grid",
                                         residuals=feasibility_residuals(market_vars(grid), grid, cons_set).to_dict())
        starts.append((fb[2], repair(fb[0], grid, cons_set)))

    rng = np.random.default_rng(cfg.seed)
    base_obj = [objective_and_gradient(problem, v)[0] for _, v in starts]
    base = starts[int(np.argmax(base_obj))][1]
    yb = par.from_vars(base)
    for i in range(cfg.n_perturbed):
        y = yb.copy()
        m = grid.m
        y[: m + 2] *= np.exp(0.5 * rng.standard_normal(m + 2))
        y[2: m + 2] += 0.1 * np.mean(y[2: m + 2]) * rng.random(m)
        y[m + 2:] = rng.random(m)
        starts.append((f"perturbed (seed={cfg.seed}, {i})", par.to_vars(y)))

    runs = []
    for order, (label, v0) in enumerate(starts):
        start_obj = objective_and_gradient(problem, v0)[0]
        if not label.startswith("perturbed"):
            res0 = feasibility_residuals(v0, grid, cons_set)
            runs.append((order, _Run(label + " [start point]", v0, start_obj, res0.max(), 0, False, np.nan, start_obj)))
        y, it, conv, stat = _augmented_lagrangian(problem, par, cons, par.from_vars(v0), cfg)
        runs.append((order, _finish(problem, par.to_vars(y), label, it, conv, stat, start_obj)))

    feasible = [(o, r) for o, r in runs if r.residual <= cfg.tol]
    if not feasible:
        raise InfeasibleProblemError("solver found no feasible point")
    feasible.sort(key=lambda t: (-round(t[1].objective, 12), t[1].residual, t[0], not t[1].converged))
    best = feasible[0][1]
    # a start point that wins outright is optimal only if a run from it converged there
    converged = best.converged
    if not converged:
        same = [r for _, r in feasible if r.converged and abs(r.objective - best.objective) <= 1e-10 * max(1.0, abs(best.objective))]
        converged = bool(same)
        if same:
            best = _Run(best.label, best.vars, best.objective, best.residual, same[0].iterations, True,
                        same[0].stationarity, best.start_objective)
    summary = [{"label": r.label, "start_objective": r.start_objective, "objective": r.objective,
                "residual": r.residual, "converged": r.converged, "iterations": r.iterations,
                "stationarity": r.stationarity} for _, r in runs]
    return GridSolution(grid, best.vars, best.objective, feasibility_residuals(best.vars, grid, cons_set),
                        best.iterations, best.label, converged, best.stationarity, cons_set, summary,
                        {"solver": cfg.to_dict(), "n_records": problem.n_records, "n_pairs": problem.n_pairs})
