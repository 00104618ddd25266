"""Generating functions, functionally generated portfolios and L-divergence."""

import csv
from dataclasses import dataclass

import numpy as np

from ._validation import (
    boundary_distance,
    check_same_dim,
    check_simplex,
    simplex_diameter,
)
from .exceptions import NotConcaveError
from .simplex import MarketPath, PortfolioMap, as_points, log_growth_factors

FD_REL_STEP = 1e-5
T_CLAMP = 1e-10
WEIGHT_SLACK = 1e-8


class GeneratingFunction:
    """A positive concave function on the simplex.

    Parameters
    ----------
    func : callable
        Maps points of shape (..., n) to values of shape (...).
    grad : callable, optional
        Ambient gradient, shape (..., n). Only its tangential part is used.
    log_func : callable, optional
        Direct evaluation of ``log func``; used for accuracy when given.
    name : str
    params : dict, optional
        Parameters such as the diversity exponent ``r``.
    """

    def __init__(self, func, grad=None, log_func=None, name="custom", params=None):
        self.func = func
        self.grad = grad
        self.log_func = log_func
        self.name = name
        self.params = dict(params or {})

    def __call__(self, p):
        return np.asarray(self.func(np.asarray(p, dtype=float)), dtype=float)

    def log(self, p):
        if self.log_func is not None:
            return np.asarray(self.log_func(np.asarray(p, dtype=float)), dtype=float)
        val = self(p)
        if np.any(~(val > 0)):
            raise ValueError(f"generating function {self.name!r} is not positive at the query point")
        return np.log(val)

    def directional_log_derivatives(self, p, h=None):
        """``D_{e(i) - p} log Phi(p)`` for every vertex ``e(i)``.

        Uses the analytic gradient when available, otherwise central
        differences along ``e(i) - p`` with step ``h`` (default
        ``1e-5 * dist(p, boundary)``), shrunk until the stencil stays in
        the simplex.
        """
        p = np.asarray(p, dtype=float)
        if self.grad is not None:
            g = np.asarray(self.grad(p), dtype=float)
            dphi = g - np.einsum("...i,...i->...", g, p)[..., None]
            return dphi / self(p)[..., None]
        return self._fd_directional(p, h)

    def _fd_directional(self, p, h):
        n = p.shape[-1]
        if h is None:
            h = FD_REL_STEP * boundary_distance(p)
        h = np.broadcast_to(np.asarray(h, dtype=float), p.shape[:-1]).copy()
        eye = np.eye(n)
        # direction e(i) - p for each i: shape (..., n_dir, n)
        d = eye - p[..., None, :]
        for _ in range(60):
            hp = h[..., None, None]
            plus = p[..., None, :] + hp * d
            minus = p[..., None, :] - hp * d
            if np.all(plus > 0) and np.all(minus > 0):
                break
            h = h / 2
        else:
            raise ValueError("finite-difference step underflowed at the simplex boundary")
        lp = self.log(plus)
        lm = self.log(minus)
        return (lp - lm) / (2 * h[..., None])

    def __repr__(self):
        return f"GeneratingFunction(name={self.name!r}, params={self.params})"


@dataclass
class FGPair:
    """A portfolio together with its generating function."""

    portfolio: PortfolioMap
    generator: GeneratingFunction

    @property
    def name(self):
        return self.portfolio.name


def _clamp_weights(w, name):
    if np.any(w < -WEIGHT_SLACK) or np.any(w > 1 + WEIGHT_SLACK):
        raise NotConcaveError(f"generator {name!r} is not concave here: weights {np.min(w):.3g}..{np.max(w):.3g}")
    w = np.clip(w, 0.0, 1.0)
    return w / w.sum(axis=-1, keepdims=True)


def portfolio_from_c2(generator, p, h=None):
    """Portfolio weights generated by a differentiable generator.

    ``pi_i(p) = p_i * (1 + D_{e(i) - p} log Phi(p))``.
    """
    p = check_simplex(p)
    w = p * (1.0 + generator.directional_log_derivatives(p, h))
    return _clamp_weights(w, generator.name)


def generated_portfolio(generator, h=None, name=None):
    """Wrap ``portfolio_from_c2`` as an :class:`FGPair`."""
    pm = PortfolioMap(lambda p: portfolio_from_c2(generator, p, h), kind="custom", name=name or generator.name)
    return FGPair(pm, generator)


# ---------------------------------------------------------------------------
# catalog


def _market():
    gen = GeneratingFunction(
        lambda p: np.ones(p.shape[:-1]),
        grad=lambda p: np.zeros_like(p),
        log_func=lambda p: np.zeros(p.shape[:-1]),
        name="market",
    )
    pm = PortfolioMap(lambda p: np.array(p, dtype=float, copy=True), kind="catalog", name="market")
    return FGPair(pm, gen)


def _equal():
    def log_phi(p):
        return np.log(p).mean(axis=-1)

    def phi(p):
        return np.exp(log_phi(p))

    def grad(p):
        return phi(p)[..., None] / (p.shape[-1] * p)

    gen = GeneratingFunction(phi, grad=grad, log_func=log_phi, name="equal")
    pm = PortfolioMap(lambda p: np.full(p.shape, 1.0 / p.shape[-1]), kind="catalog", name="equal")
    return FGPair(pm, gen)


def _entropy():
    def phi(p):
        return -(p * np.log(p)).sum(axis=-1)

    def weights(p):
        e = -p * np.log(p)
        return e / e.sum(axis=-1, keepdims=True)

    gen = GeneratingFunction(phi, grad=lambda p: -(np.log(p) + 1.0), name="entropy")
    return FGPair(PortfolioMap(weights, kind="catalog", name="entropy"), gen)


def _diversity(r):
    def log_phi(p):
        return np.log((p**r).sum(axis=-1)) / r

    def phi(p):
        return np.exp(log_phi(p))

    def grad(p):
        s = (p**r).sum(axis=-1, keepdims=True)
        return s ** (1.0 / r - 1.0) * p ** (r - 1.0)

    def weights(p):
        w = p**r
        return w / w.sum(axis=-1, keepdims=True)

    gen = GeneratingFunction(phi, grad=grad, log_func=log_phi, name="diversity", params={"r": r})
    return FGPair(PortfolioMap(weights, kind="catalog", name=f"diversity(r={r:g})"), gen)


CATALOG_NAMES = ("market", "equal", "entropy", "diversity")


def catalog(name, r=None):
    """Standard functionally generated portfolios.

    Parameters
    ----------
    name : {"market", "equal", "entropy", "diversity"}
    r : float in (0, 1)
        Required for, and only for, the diversity-weighted portfolio.
    """
    if name not in CATALOG_NAMES:
        raise ValueError(f"unknown catalog portfolio {name!r}; choose from {CATALOG_NAMES}")
    if name == "diversity":
        if r is None:
            raise ValueError("the diversity-weighted portfolio needs r")
        if not 0 < r < 1:
            raise ValueError(f"r must lie in (0, 1), got {r!r}")
        return _diversity(float(r))
    if r is not None:
        raise ValueError(f"r only applies to the diversity-weighted portfolio, not {name!r}")
    return {"market": _market, "equal": _equal, "entropy": _entropy}[name]()


def shifted(fg, c):
    """Pair generated by ``Phi - c`` (positive where ``Phi > c``)."""
    base = fg.generator
    gen = GeneratingFunction(
        lambda p: base(p) - c,
        grad=base.grad,
        name=f"{base.name}-{c:g}",
        params={**base.params, "shift": c},
    )
    return generated_portfolio(gen, name=f"{fg.name} shifted by {c:g}")


def geometric_blend(fg1, fg2, lam):
    """Convex combination of two pairs.

    The portfolio ``lam * pi1 + (1 - lam) * pi2`` is generated by the
    weighted geometric mean ``Phi1**lam * Phi2**(1 - lam)``.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    if lam == 1.0 or fg1 is fg2:
        return fg1
    if lam == 0.0:
        return fg2
    g1, g2 = fg1.generator, fg2.generator

    def log_phi(p):
        return lam * g1.log(p) + (1 - lam) * g2.log(p)

    grad = None
    if g1.grad is not None and g2.grad is not None:

        def grad(p):
            val = np.exp(log_phi(p))[..., None]
            return val * (lam * g1.grad(p) / g1(p)[..., None] + (1 - lam) * g2.grad(p) / g2(p)[..., None])

    gen = GeneratingFunction(
        lambda p: np.exp(log_phi(p)),
        grad=grad,
        log_func=log_phi,
        name=f"blend({g1.name},{g2.name},{lam:g})",
    )
    pm = PortfolioMap(lambda p: lam * fg1.portfolio(p) + (1 - lam) * fg2.portfolio(p), kind="custom",
                      name=f"blend({fg1.name},{fg2.name},{lam:g})")
    return FGPair(pm, gen)


# ---------------------------------------------------------------------------
# divergence and decomposition


def generation_gap(fg, q, p):
    """``1 + <pi(p)/p, q - p> - Phi(q)/Phi(p)``; nonnegative for generated pairs."""
    p = check_simplex(p, name="p")
    q = check_simplex(q, name="q")
    r = fg.portfolio(p) / p
    r = r - r.mean(axis=-1, keepdims=True)
    growth = 1.0 + np.einsum("...i,...i->...", r, q - p)
    return growth - np.exp(fg.generator.log(q) - fg.generator.log(p))


def l_divergence(fg, q, p, strict=True):
    """L-divergence ``T(q | p)`` of a generated pair.

    ``T(q|p) = log(1 + <pi(p)/p, q - p>) - log(Phi(q) / Phi(p))``.

    Parameters
    ----------
    fg : FGPair
    q, p : array-like, shape (..., n)
    strict : bool, default True
        Clamp values in [-1e-10, 0) to zero and raise on anything more
        negative. With ``strict=False`` the raw values are returned.
    """
    p = check_simplex(p, name="p")
    q = check_simplex(q, name="q")
    check_same_dim(p, q)
    r = fg.portfolio(p) / p
    r = r - r.mean(axis=-1, keepdims=True)
    a = np.einsum("...i,...i->...", r, q - p)
    if np.any(~(a > -1.0)):
        raise ValueError("q lies outside the solvency region of the portfolio at p (growth factor <= 0)")
    t = np.log1p(a) - (fg.generator.log(q) - fg.generator.log(p))
    if strict:
        t = _clamp_divergence(t)
    return float(t) if np.ndim(t) == 0 else t


def _clamp_divergence(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < -T_CLAMP):
        raise ValueError(f"negative L-divergence {t.min():.3g}: the pair is not functionally generated")
    return np.where(t < 0, 0.0, t)


@dataclass
class DecompositionSeries:
    """``log V(t) = generator_term(t) + drift(t)`` along a market path."""

    log_relative_value: np.ndarray
    generator_term: np.ndarray
    drift: np.ndarray
    timestamps: list = None

    def identity_error(self):
        return float(np.max(np.abs(self.log_relative_value - self.generator_term - self.drift)))

    def rows(self):
        labels = self.timestamps if self.timestamps is not None else range(len(self.drift))
        for t, lv, g, a in zip(labels, self.log_relative_value, self.generator_term, self.drift):
            yield t, lv, g, a

    def to_csv(self, path_or_file, comment=None):
        """Write columns ``t, log_V, generator_term, drift`` (17 significant digits).

        ``comment`` is written first as a ``#`` line.
        """
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(["t", "log_V", "generator_term", "drift"])
            for t, lv, g, a in self.rows():
                w.writerow([t, f"{lv:.17g}", f"{g:.17g}", f"{a:.17g}"])
        finally:
            if own:
                fh.close()


def fernholz_decompose(fg, path, strict=True):
    """Split the log relative value into generator and drift terms.

    Parameters
    ----------
    fg : FGPair
    path : MarketPath or array-like, shape (T, n)
    strict : bool
        Passed on to the per-step divergence clamp.
    """
    timestamps = path.timestamps if isinstance(path, MarketPath) else None
    mu = as_points(path)
    log_g = log_growth_factors(fg.portfolio, mu)
    log_phi = fg.generator.log(mu)
    steps = log_g - np.diff(log_phi)
    if strict:
        steps = _clamp_divergence(steps)
    zero = np.zeros(1)
    return DecompositionSeries(
        log_relative_value=np.concatenate([zero, np.cumsum(log_g)]),
        generator_term=log_phi - log_phi[0],
        drift=np.concatenate([zero, np.cumsum(steps)]),
        timestamps=timestamps,
    )


@dataclass
class BoundCheck:
    passed: bool
    bound: float
    worst_value: float
    worst_point: np.ndarray


def concave_bound_check(generator, p0, n_samples=10000, seed=0, points=None):
    """Check ``Phi(p)/Phi(p0) <= diam / dist(p0, boundary)`` on random points.

    Any positive concave function normalized at ``p0`` obeys this bound,
    so a failure flags a generator that is not concave (or not positive).
    """
    p0 = check_simplex(p0, name="p0")
    n = p0.shape[-1]
    if points is None:
        points = np.random.default_rng(seed).dirichlet(np.ones(n), size=n_samples)
        points = np.clip(points, 1e-12, None)
        points /= points.sum(axis=1, keepdims=True)
    pts = check_simplex(points, name="points")
    vals = np.exp(generator.log(pts) - generator.log(p0))
    bound = simplex_diameter() / float(boundary_distance(p0))
    k = int(np.argmax(vals))
    return BoundCheck(bool(vals[k] <= bound), bound, float(vals[k]), pts[k])
