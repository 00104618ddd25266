"""Intensity measures: bootstrap paths killed on exiting a region, and jump samples."""

import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_simplex
from .io import fmt, read_table
from .simplex import MarketPath, as_points


@dataclass
class RegionK:
    """Box ``lo <= p <= hi`` (closed, per coordinate) intersected with the simplex."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1 or len(self.lo) < 2:
            raise ValueError("lo and hi must be vectors of the same length n >= 2")
        if np.any(self.lo >= self.hi):
            raise ValueError("need lo_i < hi_i for every coordinate")
        lo = np.maximum(self.lo, 0.0)
        hi = np.minimum(self.hi, 1.0)
        if not (lo.sum() < 1.0 < hi.sum()) or np.any(hi <= 0):
            raise ValueError("region has empty interior in the simplex")

    @classmethod
    def two_asset(cls, lo1, hi1):
        """Region ``lo1 <= p_1 <= hi1`` for two assets."""
        return cls([lo1, 1.0 - hi1], [hi1, 1.0 - lo1])

    @property
    def n(self):
        return len(self.lo)

    def contains(self, p):
        p = np.asarray(p, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)


@dataclass
class ReturnHistory:
    """Per-period gross returns, rows are periods and columns assets."""

    gross: np.ndarray
    timestamps: list = None

    def __post_init__(self):
        g = np.asarray(self.gross, dtype=float)
        if g.ndim != 2 or len(g) == 0:
            raise ValueError("return history must be a nonempty 2-d table")
        if np.any(~(g > 0)) or not np.all(np.isfinite(g)):
            t, i = np.argwhere(~(g > 0) | ~np.isfinite(g))[0]
            raise ValueError(f"gross return at period {t}, asset {i} is not strictly positive")
        self.gross = g

    @classmethod
    def from_log_returns(cls, log_returns, timestamps=None):
        return cls(np.exp(np.asarray(log_returns, dtype=float)), timestamps)

    @classmethod
    def from_prices(cls, prices, timestamps=None):
        prices = np.asarray(prices, dtype=float)
        if len(prices) < 2:
            raise ValueError("need at least two price rows to form returns")
        ts = None if timestamps is None else list(timestamps)[1:]
        return cls(prices[1:] / prices[:-1], ts)

    @classmethod
    def from_csv(cls, path_or_file):
        labels, _, prices = read_table(path_or_file)
        return cls.from_prices(prices, labels)

    @property
    def log_returns(self):
        return np.log(self.gross)


def recenter_returns(history):
    """Shift each asset's log returns to zero sample mean."""
    lr = history.log_returns
    return ReturnHistory.from_log_returns(lr - lr.mean(axis=0), history.timestamps)


def _one_path(gross, mu0, region, max_len, rng):
    pts = [mu0]
    mu = mu0
    while len(pts) < max_len:
        c = mu * gross[rng.integers(len(gross))]
        nxt = c / c.sum()
        if not region.contains(nxt):
            return pts, False
        pts.append(nxt)
        mu = nxt
    return pts, True


def bootstrap_paths(history, mu0, region, n_paths, max_len, seed):
    """Simulate market weight paths killed on leaving ``region``.

    Each step draws one historical period uniformly with replacement
    (jointly across assets) and applies its gross returns. A path keeps
    only in-region points; it stops before the first point outside, or
    at ``max_len`` points with ``truncated`` set.

    Path ``i`` draws from child ``i`` of ``numpy.random.SeedSequence(seed)``,
    so each path is reproducible on its own.
    """
    mu0 = check_simplex(mu0, name="mu0")
    if mu0.shape[-1] != history.gross.shape[1] or region.n != len(mu0):
        raise ValueError("mu0, region and history disagree on the number of assets")
    if not region.contains(mu0):
        raise ValueError("mu0 is not in the region")
    if n_paths < 1 or max_len < 1:
        raise ValueError("n_paths and max_len must be positive")
    children = np.random.SeedSequence(seed).spawn(n_paths)
    paths = []
    for i, child in enumerate(children):
        pts, truncated = _one_path(history.gross, mu0, region, max_len, np.random.default_rng(child))
        paths.append(MarketPath(np.array(pts), truncated=truncated, meta={"path": i, "seed": seed}))
    return paths


@dataclass
class JumpSample:
    """Weighted jump pairs ``(p, q)``; a discrete intensity measure."""

    p: np.ndarray
    q: np.ndarray
    weights: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = check_simplex(np.atleast_2d(np.asarray(self.p, dtype=float)), name="sample p")
        self.q = check_simplex(np.atleast_2d(np.asarray(self.q, dtype=float)), name="sample q")
        if self.p.shape != self.q.shape:
            raise ValueError("p and q have different shapes")
        if len(self.p) == 0:
            raise ValueError("no jumps observed")
        if self.weights is None:
            self.weights = np.full(len(self.p), 1.0 / len(self.p))
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.p),) or np.any(w < 0):
            raise ValueError("weights must be a nonnegative vector, one per pair")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum():.16g}, not 1")
        self.weights = w

    def __len__(self):
        return len(self.p)

    @property
    def n_assets(self):
        return self.p.shape[1]

    @property
    def degenerate(self):
        """True when every jump has ``q == p``."""
        return bool(np.all(self.p == self.q))

    def subsample(self, k):
        """The first ``k`` pairs, reweighted uniformly over them."""
        w = self.weights[:k]
        return JumpSample(self.p[:k], self.q[:k], w / w.sum(), {**self.provenance, "prefix": k})

    def to_csv(self, path_or_file, comment=None):
        n = self.n_assets
        own = isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow([f"p_{i + 1}" for i in range(n)] + [f"q_{i + 1}" for i in range(n)] + ["weight"])
            for p, q, wt in zip(self.p, self.q, self.weights):
                w.writerow([fmt(v) for v in p] + [fmt(v) for v in q] + [fmt(wt)])
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(cls, path_or_file):
        own = isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, newline="") if own else path_or_file
        try:
            rows = list(csv.reader(fh))
        finally:
            if own:
                fh.close()
        numbered = [(i + 1, r) for i, r in enumerate(rows) if r and not r[0].startswith("#")]
        if not numbered:
            raise ValueError("empty jump sample file")
        hline, header = numbered[0]
        if len(header) < 5 or (len(header) - 1) % 2 or header[-1] != "weight" or header[0] != "p_1":
            raise ValueError(f"line {hline}: expected header p_1..p_n, q_1..q_n, weight")
        n = (len(header) - 1) // 2
        data = []
        for lineno, row in numbered[1:]:
            if not any(c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
            try:
                data.append([float(c) for c in row])
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric field") from None
        arr = np.array(data, dtype=float).reshape(-1, 2 * n + 1)
        return cls(arr[:, :n], arr[:, n:2 * n], arr[:, -1])


def _round_point(p, decimals):
    r = np.round(p, decimals)
    k = np.argmax(r, axis=-1)
    rows = np.arange(len(r))
    r[rows, k] = 0.0
    r[rows, k] = 1.0 - r.sum(axis=-1)
    return r


def collect_pairs(paths, rounding_decimals=3, region=None):
    """Consecutive in-region pairs from simulated paths, uniformly weighted.

    Coordinates are rounded to ``rounding_decimals`` and the largest one
    is reset to one minus the others. With ``region`` given, pairs whose
    rounded endpoints fall outside it are dropped.
    """
    ps, qs = [], []
    for path in paths:
        pts = as_points(path)
        if len(pts) < 2:
            continue
        ps.append(pts[:-1])
        qs.append(pts[1:])
    if not ps:
        raise ValueError("no jumps observed")
    p, q = np.vstack(ps), np.vstack(qs)
    if rounding_decimals is not None:
        p, q = _round_point(p, rounding_decimals), _round_point(q, rounding_decimals)
    keep = np.all(p > 0, axis=1) & np.all(q > 0, axis=1)
    if region is not None:
        keep &= region.contains(p) & region.contains(q)
    dropped = int(np.sum(~keep))
    p, q = p[keep], q[keep]
    if len(p) == 0:
        raise ValueError("no jumps observed")
    prov = {"n_paths": len(paths), "rounding_decimals": rounding_decimals, "dropped": dropped}
    seeds = {path.meta.get("seed") for path in paths if isinstance(path, MarketPath)}
    if len(seeds) == 1 and None not in seeds:
        prov["seed"] = seeds.pop()
    return JumpSample(p, q, provenance=prov)


def pairs_from_markov(sampler, mu0, burn_in, N, seed):
    """Consecutive pairs from a Markov chain on the simplex.

    Parameters
    ----------
    sampler : callable
        ``sampler(p, rng)`` returns the next point given the current one.
    mu0 : array-like
    burn_in : int
        Steps discarded before recording.
    N : int
        Number of recorded pairs.
    seed : int

    Returns
    -------
    JumpSample
        ``provenance["degenerate"]`` is True if every jump is trivial.
    """
    if N < 1 or burn_in < 0:
        raise ValueError("need N >= 1 and burn_in >= 0")
    rng = np.random.default_rng(seed)
    cur = check_simplex(mu0, name="mu0")
    pts = []
    for step in range(burn_in + N + 1):
        if step >= burn_in:
            pts.append(cur)
        if step == burn_in + N:
            break
        nxt = np.asarray(sampler(cur, rng), dtype=float)
        try:
            cur = check_simplex(nxt, name="sampler output")
        except ValueError as exc:
            raise ValueError(f"sampler left the simplex at step {step + 1}: {exc}") from None
    pts = np.array(pts)
    sample = JumpSample(pts[:-1], pts[1:], provenance={"seed": seed, "burn_in": burn_in, "N": N})
    sample.provenance["degenerate"] = sample.degenerate
    return sample


def random_walk_sampler(step=0.01, lo=0.1, hi=0.3, decimals=2):
    """Two-asset lattice random walk on ``p_1``, reflected inside ``[lo, hi]``.

    Handy seeded generator for experiments: each step moves ``p_1`` by
    ``-step``, 0 or ``+step`` with equal probability.
    """

    def sampler(p, rng):
        x = round(float(p[0]) + step * (int(rng.integers(3)) - 1), decimals)
        if x < lo - 1e-12 or x > hi + 1e-12:
            x = round(float(p[0]), decimals)
        return np.array([x, 1.0 - x])

    return sampler
