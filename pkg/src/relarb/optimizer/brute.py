"""Exhaustive lattice search for tiny grid problems (verification oracle)."""

import itertools

import numpy as np

from ..exceptions import InfeasibleProblemError
from .problem import DecisionVars, GridSolution, feasibility_residuals, objective_and_gradient

MAX_M = 4
MIN_STEP = 1e-2


def _z_table(problem, zs):
    # z-dependent part of the objective, per grid point and lattice value
    x = problem.grid.x
    xp, xq = x[problem.ip], x[problem.iq]
    coef = (xq - xp) / (xp * (1 - xp))
    g = 1.0 + coef[:, None] * (zs[None, :] - xp[:, None])
    contrib = problem.w[:, None] * np.log(g)
    table = np.zeros((problem.grid.m, len(zs)))
    np.add.at(table, problem.ip, contrib)
    return table


def _best_z(table, a, b, zs, monotone):
    """Best lattice ``z`` per combination; returns values and argmax table rows."""
    C, K = a.shape[0], len(zs)
    m = table.shape[0]
    if not monotone:
        total = np.zeros(C)
        for j in range(m):
            mask = (zs[None, :] >= a[:, j:j + 1]) & (zs[None, :] <= b[:, j:j + 1])
            vals = np.where(mask, table[j][None, :], -np.inf)
            total += vals.max(axis=1)
        return total
    prev = np.zeros((C, K))
    for j in range(m):
        mask = (zs[None, :] >= a[:, j:j + 1]) & (zs[None, :] <= b[:, j:j + 1])
        cur = np.where(mask, table[j][None, :] + prev, -np.inf)
        prev = np.maximum.accumulate(cur, axis=1)
    return prev[:, -1]


def _reconstruct(table, a, b, zs, monotone):
    m = table.shape[0]
    masks = [(zs >= a[j]) & (zs <= b[j]) for j in range(m)]
    if not monotone:
        return np.array([zs[np.argmax(np.where(masks[j], table[j], -np.inf))] for j in range(m)])
    layers = []
    prev = np.zeros(len(zs))
    for j in range(m):
        cur = np.where(masks[j], table[j] + prev, -np.inf)
        layers.append(cur)
        prev = np.maximum.accumulate(cur)
    z = np.empty(m)
    limit = len(zs) - 1
    for j in range(m - 1, -1, -1):
        k = int(np.argmax(layers[j][: limit + 1]))
        z[j] = zs[k]
        limit = k
    return z


def brute_force_solve(problem, lattice_step=0.01, slack=1e-9, max_combos=2_000_000, chunk=20000):
    """Enumerate ``z`` and ``phi`` on a lattice and keep the best feasible point.

    The endpoint values ``phi_0`` and ``phi_{m+1}`` are set to zero: they
    do not enter the objective and lowering them only loosens the
    concavity and supergradient constraints. Each free ``phi_j`` ranges
    over multiples of ``lattice_step`` in the interval allowed by
    concavity and ``phi_1 = 1``. For each ``phi`` the best ``z`` on the
    lattice is found exactly by dynamic programming over the grid points.
    Constraints are checked with ``slack``; the default only absorbs
    rounding, so every candidate is feasible and the result is a lower
    bound for the true optimum. A slack of order ``lattice_step`` turns
    the search into a relaxation instead.

    ``meta["resolution"]`` estimates how much the lattice can move the
    objective: ``lattice_step`` times the l1 norm of the gradient at the
    lattice optimum.
    """
    grid, cons = problem.grid, problem.constraints
    m = grid.m
    if m > MAX_M:
        raise ValueError(f"brute force handles at most {MAX_M} grid points, got {m}")
    if lattice_step < MIN_STEP:
        raise ValueError(f"lattice_step must be at least {MIN_STEP}")
    slack = float(slack)
    x, xf = grid.x, grid.full
    ranges = []
    for j in range(1, m):
        lo, hi = (1 - x[j]) / (1 - x[0]), x[j] / x[0]
        ks = np.arange(np.floor(lo / lattice_step), np.ceil(hi / lattice_step) + 1)
        vals = ks * lattice_step
        ranges.append(vals[(vals >= lo - slack) & (vals <= hi + slack) & (vals > 0)])
    n_combos = int(np.prod([len(r) for r in ranges])) if ranges else 1
    if n_combos > max_combos:
        raise ValueError(f"instance too large: {n_combos} generating-function combinations (cap {max_combos})")
    zs = np.round(np.arange(0, 1 + lattice_step / 2, lattice_step), 12)
    zs = zs[zs <= 1.0]
    table = _z_table(problem, zs)
    zlo, zhi = cons.z_bounds(x)
    monotone = bool(cons.monotone and m > 1)

    best_val, best_phi = -np.inf, None
    combos = itertools.product(*ranges) if ranges else iter([()])
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            break
        free = np.array(block, dtype=float).reshape(len(block), m - 1)
        C = len(free)
        phi = np.zeros((C, m + 2))
        phi[:, 1] = 1.0
        phi[:, 2: m + 1] = free
        s = np.diff(phi, axis=1) / np.diff(xf)
        ok = np.all(s[:, 1:] - s[:, :-1] <= slack, axis=1)
        if not np.any(ok):
            continue
        phi, s = phi[ok], s[ok]
        interior = phi[:, 1:-1]
        lower = x + x * (1 - x) * s[:, 1:] / interior
        upper = x + x * (1 - x) * s[:, :-1] / interior
        a = np.maximum(lower, zlo) - slack
        b = np.minimum(upper, zhi) + slack
        zval = _best_z(table, a, b, zs, monotone)
        lp = np.log(interior)
        pval = (problem.w[None, :] * (lp[:, problem.ip] - lp[:, problem.iq])).sum(axis=1)
        total = zval + pval
        k = int(np.argmax(total))
        if total[k] > best_val:
            best_val, best_phi = float(total[k]), phi[k].copy()
            best_ab = (a[k].copy(), b[k].copy())
    if best_phi is None or not np.isfinite(best_val):
        raise InfeasibleProblemError("no lattice point satisfies the constraints")
    z = _reconstruct(table, best_ab[0], best_ab[1], zs, monotone)
    v = DecisionVars(z, best_phi)
    obj, g = objective_and_gradient(problem, v)
    res = feasibility_residuals(v, grid, cons)
    resolution = lattice_step * float(np.sum(np.abs(g.z)) + np.sum(np.abs(g.phi)))
    return GridSolution(grid, v, obj, res, iterations=n_combos, start="lattice", converged=True,
                        stationarity=float("nan"), constraints=cons,
                        meta={"lattice_step": lattice_step, "resolution": resolution, "slack": slack})
