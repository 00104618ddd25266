"""Input validation helpers shared across the package."""

import numpy as np

SUM_ATOL = 1e-12
MIN_COORD = 1e-15
WEIGHT_ATOL = 1e-10


def check_simplex(p, name="p", atol=SUM_ATOL, min_coord=MIN_COORD):
    """Validate points of the open simplex.

    Parameters
    ----------
    p : array-like, shape (..., n)
        One point or a stack of points.
    name : str
        Used in error messages.

    Returns
    -------
    ndarray of float64 with the same shape.

    Raises
    ------
    ValueError
        If n < 2, a coordinate is not strictly positive, or a point does
        not sum to one within ``atol``. Points are never renormalized.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] < 2:
        raise ValueError(f"{name}: simplex points need at least 2 coordinates, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name}: non-finite coordinates")
    low = p <= min_coord
    if np.any(low):
        idx = np.argwhere(low)[0]
        raise ValueError(f"{name}: coordinate {tuple(int(i) for i in idx)} = {p[tuple(idx)]!r} is not strictly positive")
    err = np.abs(p.sum(axis=-1) - 1.0)
    if np.any(err > atol):
        idx = np.unravel_index(np.argmax(err), err.shape)
        raise ValueError(f"{name}: point {tuple(int(i) for i in idx)} sums to {1 + float(err[idx]):.16g}, not 1")
    return p


def check_tangent(v, name="v", atol=SUM_ATOL):
    """Validate tangent vectors of the simplex (coordinates summing to 0)."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] < 2:
        raise ValueError(f"{name}: tangent vectors need at least 2 coordinates")
    if np.any(np.abs(v.sum(axis=-1)) > atol):
        raise ValueError(f"{name}: coordinates must sum to 0")
    return v


def check_weights(w, name="weights", atol=WEIGHT_ATOL):
    """Validate portfolio weights in the closed simplex."""
    w = np.asarray(w, dtype=float)
    if np.any(w < -atol) or np.any(np.abs(w.sum(axis=-1) - 1.0) > atol):
        raise ValueError(f"{name}: portfolio weights must be nonnegative and sum to 1")
    return w


def check_same_dim(a, b, names=("p", "q")):
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"{names[0]} and {names[1]} have different dimensions: {a.shape[-1]} vs {b.shape[-1]}")


def boundary_distance(p):
    """Euclidean distance from ``p`` to the relative boundary of the simplex."""
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    return p.min(axis=-1) * np.sqrt(n / (n - 1.0))


def simplex_diameter():
    return np.sqrt(2.0)
