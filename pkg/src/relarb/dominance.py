"""Diagnostics for domination on compacts between portfolios.

Cycle tests, divergence comparisons, drift quadratic forms, the relative
concavity transform, the maximality integral test and the two-asset
aggressiveness inequality.
"""

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from ._validation import boundary_distance, check_simplex, check_tangent
from .exceptions import RuinError
from .fgp import l_divergence
from .io import to_jsonable
from .simplex import as_points, log_growth_factors

RMCM_TOL = 1e-12
DOMINANCE_TOL = 1e-10
HESS_REL_STEP = 1e-4


class _Report:
    def to_dict(self):
        return to_jsonable(asdict(self))


# ---------------------------------------------------------------------------
# drift quadratic form


def _step_inside(p, v, t):
    for _ in range(60):
        if np.all(p + t * v > 0) and np.all(p - t * v > 0):
            return t
        t /= 2
    raise ValueError("Hessian step underflowed: p is too close to the boundary along v")


def drift_form(generator, p, v, t=None):
    """Drift quadratic form ``-Hess Phi(p)(v, v) / (2 Phi(p))``.

    The Hessian is the second central difference of ``Phi(p + s v)`` at
    ``s = 0`` with step ``1e-4 * dist(p, boundary) / |v|`` by default.
    """
    p = check_simplex(p)
    v = check_tangent(v)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return 0.0
    if t is None:
        t = HESS_REL_STEP * float(boundary_distance(p)) / nv
    t = _step_inside(p, v, t)
    f0 = float(generator(p))
    hess = (float(generator(p + t * v)) - 2.0 * f0 + float(generator(p - t * v))) / t**2
    return -hess / (2.0 * f0)


@dataclass
class TaylorReport(_Report):
    drift: float
    steps: list
    ratios: list
    status: str


def taylor_consistency(fg, p, v, steps=(1e-2, 1e-3, 1e-4), rel_tol=0.05, check_step=1e-3):
    """Compare ``T(p + t v | p) / t**2`` with the drift quadratic form.

    ``status`` is "degenerate-zero" when both sides vanish, otherwise
    "consistent" if the ratio at ``check_step`` is within ``rel_tol`` of
    the drift form and "inconsistent" if not.
    """
    p = check_simplex(p)
    v = check_tangent(v)
    h = drift_form(fg.generator, p, v)
    ratios = []
    for t in steps:
        q = p + t * v
        if np.any(q <= 0):
            ratios.append(float("nan"))
            continue
        ratios.append(l_divergence(fg, q, p, strict=False) / t**2)
    ratios_arr = np.asarray(ratios)
    if abs(h) < 1e-12 and np.all(np.abs(ratios_arr[np.isfinite(ratios_arr)]) < 1e-8):
        status = "degenerate-zero"
    else:
        r = ratios[list(steps).index(check_step)] if check_step in steps else l_divergence(
            fg, p + check_step * v, p, strict=False) / check_step**2
        status = "consistent" if abs(r - h) <= rel_tol * abs(h) else "inconsistent"
    return TaylorReport(float(h), list(steps), ratios, status)


# ---------------------------------------------------------------------------
# cycles and divergence comparison


@dataclass
class CycleReport(_Report):
    cycle: np.ndarray
    value_ratio: float
    verdict: str
    ruined: list = field(default_factory=list)


def rmcm_cycle_test(tau, pi, cycle, tol=RMCM_TOL):
    """Relative value ``V_tau / V_pi`` after traversing a closed cycle.

    The verdict is "violates_RMCM" when the ratio falls below ``1 - tol``.
    """
    pts = as_points(cycle)
    if len(pts) < 2 or np.max(np.abs(pts[0] - pts[-1])) > 1e-12:
        raise ValueError("cycle must return to its first point")
    logs, ruined = {}, []
    for label, pm in (("tau", tau), ("pi", pi)):
        try:
            logs[label] = float(np.sum(log_growth_factors(pm, pts)))
        except RuinError:
            ruined.append(label)
            logs[label] = -np.inf
    if "tau" in ruined and "pi" in ruined:
        ratio = float("nan")
        verdict = "violates_RMCM"
    else:
        ratio = float(np.exp(logs["tau"] - logs["pi"]))
        verdict = "violates_RMCM" if ratio < 1.0 - tol else "consistent"
    return CycleReport(pts, ratio, verdict, ruined)


@dataclass
class DominanceReport(_Report):
    dominates: bool
    worst_margin: float
    worst_pair: np.ndarray
    n_samples: int


def _split_samples(samples):
    if isinstance(samples, (tuple, list)) and len(samples) == 2:
        p, q = (np.asarray(s, dtype=float) for s in samples)
    else:
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 3 or arr.shape[1] != 2:
            raise ValueError("samples must be (P, Q) or an array of shape (N, 2, n)")
        p, q = arr[:, 0], arr[:, 1]
    return check_simplex(p, name="sample p"), check_simplex(q, name="sample q")


def divergence_dominates(fg_tau, fg_pi, samples, tol=DOMINANCE_TOL):
    """Check ``T_tau(q|p) >= T_pi(q|p) - tol`` on every sampled pair."""
    p, q = _split_samples(samples)
    margin = l_divergence(fg_tau, q, p, strict=False) - l_divergence(fg_pi, q, p, strict=False)
    margin = np.atleast_1d(margin)
    k = int(np.argmin(margin))
    return DominanceReport(bool(margin[k] >= -tol), float(margin[k]), np.stack([p[k], q[k]]), len(margin))


# ---------------------------------------------------------------------------
# one-dimensional integral tests


@dataclass
class IntegralReport(_Report):
    verdict: str
    partials: dict
    value: float


def _classify(partials, growth_factor, cap):
    vals = list(partials)
    if vals[-1] > cap:
        return "divergent"
    inc = np.diff(vals)
    # convergent tails shrink geometrically along the epsilon schedule;
    # increments that fail to shrink by the factor mean growth without bound
    if len(inc) >= 2 and inc[-1] > 1e-9 * max(1.0, abs(vals[-1])) and inc[-1] * growth_factor >= inc[-2]:
        return "divergent"
    return "convergent"


def _partial_integrals(g, eps_schedule):
    # integrand g(s) ds with t = 1 - exp(-s)
    s_marks = [0.0] + [-np.log(e) for e in eps_schedule]
    out, acc = [], 0.0
    for lo, hi in zip(s_marks[:-1], s_marks[1:]):
        val, _ = integrate.quad(g, lo, hi, limit=400, epsabs=0.0, epsrel=1e-11)
        acc += val
        out.append(acc)
    return out, s_marks[-1]


def integral_condition(generator, n, eps_schedule=(1e-2, 1e-4, 1e-6, 1e-8), growth_factor=1.5, cap=1e3):
    """Numerically classify ``int_0^1 Phi(t e(1) + (1 - t) ebar)**-2 dt``.

    Partial integrals up to ``1 - eps`` are evaluated for each ``eps``.
    The integral is reported divergent if the last partial value exceeds
    ``cap`` or if successive increments stop shrinking by
    ``growth_factor``; for convergent integrals ``value`` is the full
    integral over [0, 1).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    eps_schedule = sorted(eps_schedule, reverse=True)

    def point(s):
        d = np.exp(-s)
        p = np.full(n, d / n)
        p[0] = 1.0 - (n - 1) * d / n
        return p

    def g(s):
        val = float(generator(point(s)))
        if not val > 0:
            raise ValueError(f"generating function is not positive on the segment (t = {1 - np.exp(-s):.6g})")
        return np.exp(-s) / val**2

    partials, s_last = _partial_integrals(g, eps_schedule)
    verdict = _classify(partials, growth_factor, cap)
    if verdict == "convergent":
        tail, _ = integrate.quad(g, s_last, np.inf, limit=400)
        value = partials[-1] + tail
    else:
        value = float("inf")
    return IntegralReport(verdict, {f"{e:.0e}": v for e, v in zip(eps_schedule, partials)}, float(value))


@dataclass
class RelativeConcavityTransform(_Report):
    x: np.ndarray
    F: np.ndarray
    ell: float
    ell_infinite: bool
    y: np.ndarray
    G: np.ndarray
    w: np.ndarray
    concave: bool
    max_second_difference: float
    witness: dict
    truncated: bool


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _cumulative_inverse_square(u_fn, x):
    lo, hi = x[:-1], x[1:]
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = 1.0 / np.asarray(u_fn(nodes), dtype=float) ** 2
    pieces = half * (vals * _GL_WEIGHTS).sum(axis=1)
    return np.concatenate([[0.0], np.cumsum(pieces)])


def relative_concavity_transform(u_fn, v_fn, a, b, grid_size=1000, tol=1e-6):
    """Reparametrize ``v / u`` so that relative concavity becomes concavity.

    With ``F(x) = int_a^x u**-2`` and ``G`` its inverse, ``w = (v/u) o G``
    is concave whenever ``-v''/v >= -u''/u``. Concavity of ``w`` is tested
    with second differences at the sampled nodes (where ``G`` is exact),
    expressed on a uniform grid of ``grid_size`` steps over ``[0, ell)``:
    the verdict is concave if none exceeds ``tol * max|w|``.
    """
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError("need finite a < b")
    x = a + (b - a) * np.arange(grid_size + 1) / grid_size
    u = np.asarray(u_fn(x), dtype=float)
    v = np.asarray(v_fn(x), dtype=float)
    ok = (u > 0) & np.isfinite(u) & (v > 0) & np.isfinite(v)
    truncated = False
    open_end = not ok[-1]
    if not np.all(ok[:-1]):
        stop = int(np.argmin(ok))
        if stop < 3:
            raise ValueError("u or v is not positive near a")
        warnings.warn(f"u or v not positive at x = {x[stop]:.6g}; domain truncated", RuntimeWarning, stacklevel=2)
        x, u, v = x[:stop], u[:stop], v[:stop]
        truncated = True
    elif open_end:
        # degenerate right endpoint, e.g. u(b) = 0: treat [a, b) as half open
        x, u, v = x[:-1], u[:-1], v[:-1]
    F = _cumulative_inverse_square(u_fn, x)

    ell_infinite = False
    if open_end and not truncated:
        gaps = (1e-2, 1e-4, 1e-6, 1e-8)
        # nodes graded geometrically toward b resolve the endpoint singularity
        partials = [float(_cumulative_inverse_square(u_fn, b - (b - a) * np.geomspace(1.0, g, 4001))[-1]) for g in gaps]
        ell_infinite = _classify(partials, 1.5, 1e12) == "divergent"
    ell = float(F[-1])

    w_nodes = v / u
    dy = np.diff(F)
    slopes = np.diff(w_nodes) / dy
    d2 = 2.0 * np.diff(slopes) / (dy[1:] + dy[:-1])
    step = ell / grid_size
    second = d2 * step**2
    scale = float(np.max(np.abs(w_nodes)))
    k = int(np.argmax(second))
    worst = float(second[k])
    concave = bool(worst <= tol * scale)
    witness = {} if concave else {"y": float(F[k + 1]), "x": float(x[k + 1]), "second_difference": worst}

    y = np.linspace(0.0, ell, grid_size, endpoint=not open_end)
    G = np.interp(y, F, x)
    w = np.asarray(v_fn(G), dtype=float) / np.asarray(u_fn(G), dtype=float)
    return RelativeConcavityTransform(x, F, ell, ell_infinite, y, G, w, concave, worst, witness, truncated)


# ---------------------------------------------------------------------------
# two-asset aggressiveness


@dataclass
class AggressivenessReport(_Report):
    min_value: float
    argmin_y: float
    y: np.ndarray
    values: np.ndarray


def asset_one_weight(pi):
    """Weight of asset 1 as a function of its market weight (two assets)."""

    def tau1(x):
        x = np.asarray(x, dtype=float)
        return pi(np.stack([x, 1.0 - x], axis=-1))[..., 0]

    return tau1


def two_asset_aggressiveness(tau1, y_range=(-5.0, 5.0), grid=1001, h=1e-5):
    """Minimum of ``q(1 - q) - q'`` where ``q(y) = tau1(e**y / (1 + e**y))``.

    A portfolio dominating the equal-weighted one must keep this at or
    above 1/4 everywhere; the check is necessary, not sufficient.
    """
    y = np.linspace(y_range[0], y_range[1], grid)

    def q(yy):
        vals = np.asarray(tau1(1.0 / (1.0 + np.exp(-yy))), dtype=float)
        if np.any(vals < 0) or np.any(vals > 1) or not np.all(np.isfinite(vals)):
            raise ValueError("tau1 must take values in [0, 1]")
        return vals

    qy = q(y)
    dq = (q(y + h) - q(y - h)) / (2 * h)
    vals = qy * (1 - qy) - dq
    k = int(np.argmin(vals))
    return AggressivenessReport(float(vals[k]), float(y[k]), y, vals)
