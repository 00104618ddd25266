"""Simplex geometry, market paths and relative value processes."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_simplex, check_weights
from .exceptions import RuinError


class PortfolioMap:
    """A rule assigning closed-simplex weights to each market weight.

    Parameters
    ----------
    func : callable
        Maps an array of shape (..., n) to weights of the same shape. If
        ``vectorized`` is False it is called once per point.
    kind : {"catalog", "grid", "custom"}
    name : str, optional
    vectorized : bool, default True
    """

    def __init__(self, func, kind="custom", name=None, vectorized=True):
        if kind not in ("catalog", "grid", "custom"):
            raise ValueError(f"unknown portfolio kind {kind!r}")
        self.func = func
        self.kind = kind
        self.name = name or getattr(func, "__name__", "portfolio")
        self.vectorized = vectorized

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if self.vectorized or p.ndim == 1:
            w = np.asarray(self.func(p), dtype=float)
        else:
            flat = p.reshape(-1, p.shape[-1])
            w = np.array([self.func(row) for row in flat], dtype=float).reshape(p.shape)
        return check_weights(w, name=f"{self.name} weights")

    def __repr__(self):
        return f"PortfolioMap(name={self.name!r}, kind={self.kind!r})"


def market_portfolio():
    return PortfolioMap(lambda p: np.array(p, dtype=float, copy=True), kind="catalog", name="market")


@dataclass
class MarketPath:
    """An ordered sequence of market weights.

    ``truncated`` marks simulated paths that were stopped by a length
    cap rather than by leaving their region.
    """

    points: np.ndarray
    timestamps: list = None
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("a market path needs at least one point")
        self.points = check_simplex(pts, name="market path")
        if self.timestamps is not None and len(self.timestamps) != len(pts):
            raise ValueError("timestamps and points differ in length")

    def __len__(self):
        return len(self.points)

    @property
    def n_assets(self):
        return self.points.shape[1]

    def concat(self, other):
        """Append ``other``; its first point is taken to repeat our last one."""
        if not np.allclose(other.points[0], self.points[-1], rtol=0, atol=1e-12):
            raise ValueError("paths do not join")
        ts = None
        if self.timestamps is not None and other.timestamps is not None:
            ts = list(self.timestamps) + list(other.timestamps[1:])
        return MarketPath(np.vstack([self.points, other.points[1:]]), ts)


def as_points(path):
    if isinstance(path, MarketPath):
        return path.points
    return MarketPath(path).points


def weights_from_capitalizations(caps, timestamps=None):
    """Market weights from a table of capitalizations.

    Parameters
    ----------
    caps : array-like, shape (n_times, n_assets)
        Strictly positive capitalizations (or prices; only ratios matter).

    Returns
    -------
    MarketPath
    """
    caps = np.asarray(caps, dtype=float)
    if caps.ndim == 1:
        caps = caps[None, :]
    if caps.size == 0:
        raise ValueError("empty capitalization table")
    bad = ~(caps > 0) | ~np.isfinite(caps)
    if np.any(bad):
        t, i = np.argwhere(bad)[0]
        raise ValueError(f"capitalization at time {t}, asset {i} is not strictly positive: {caps[t, i]!r}")
    mu = caps / caps.sum(axis=1, keepdims=True)
    return MarketPath(mu, timestamps)


def weight_ratio(pi, p):
    """Componentwise ratio ``pi(p) / p``."""
    p = check_simplex(p)
    return pi(p) / p


def _tangent_ratio(pi, p):
    # Inner products below are only ever taken with tangent displacements,
    # so the ratio may be centered; this keeps the market factor exactly 1.
    r = pi(p) / p
    return r - r.mean(axis=-1, keepdims=True)


def log_growth_factors(pi, path):
    """Log of the one-step factors ``V(t+1) / V(t)`` along ``path``."""
    mu = as_points(path)
    if len(mu) < 2:
        return np.zeros(0)
    r = _tangent_ratio(pi, mu[:-1])
    g = 1.0 + np.einsum("ti,ti->t", r, mu[1:] - mu[:-1])
    bad = np.flatnonzero(~(g > 0))
    if bad.size:
        t = int(bad[0])
        raise RuinError(f"portfolio ruined relative to market at step {t} -> {t + 1} (factor {g[t]!r})", index=t)
    return np.log(g)


def relative_value_path(pi, path):
    """Relative value process ``V(t)`` of ``pi`` with ``V(0) = 1``."""
    return np.exp(np.concatenate([[0.0], np.cumsum(log_growth_factors(pi, path))]))


def line_integral(pi, vertices, quadrature_steps=1000):
    """Line integral of the weight ratio along a piecewise linear curve.

    Composite midpoint rule with ``quadrature_steps`` nodes per segment.

    Parameters
    ----------
    pi : PortfolioMap
    vertices : array-like, shape (k, n)
        Curve vertices, all strictly inside the simplex.
    quadrature_steps : int, >= 2
    """
    if quadrature_steps < 2:
        raise ValueError("quadrature_steps must be at least 2")
    verts = np.asarray(vertices, dtype=float)
    try:
        verts = check_simplex(verts, name="curve")
    except ValueError as exc:
        raise ValueError(f"curve must stay inside the open simplex: {exc}") from None
    if len(verts) < 2:
        return 0.0
    t = (np.arange(quadrature_steps) + 0.5) / quadrature_steps
    total = 0.0
    for a, b in zip(verts[:-1], verts[1:]):
        d = b - a
        nodes = a + t[:, None] * d
        r = _tangent_ratio(pi, nodes)
        total += float((r @ d).sum()) / quadrature_steps
    return total
