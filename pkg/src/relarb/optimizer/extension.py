"""Extension of a grid solution to a polyhedral generated pair on (0, 1)."""

import warnings

import numpy as np

from ..fgp import FGPair, GeneratingFunction
from ..simplex import PortfolioMap


class RegimeExitWarning(UserWarning):
    """The market weight left the grid range of an optimized portfolio."""


def polyhedral_extension(solution, grid=None, outside="extend", warn=True):
    """Pair generated by the piecewise linear interpolation of ``phi``.

    At grid points the portfolio is the stored ``z_j``; between them it
    follows the segment slope, ``z(x) = x + x (1 - x) s / phi(x)``.

    Parameters
    ----------
    solution : GridSolution
    grid : Grid, optional
        Defaults to ``solution.grid``.
    outside : {"extend", "hold"}
        Behaviour outside ``[x_1, x_m]``. "extend" keeps the polyhedral
        generator on all of (0, 1). "hold" freezes the weights at ``z_1``
        (resp. ``z_m``), generated there by the constant-weight function
        glued to ``phi`` at the boundary grid point; a
        :class:`RegimeExitWarning` is emitted when this happens.
    """
    if outside not in ("extend", "hold"):
        raise ValueError("outside must be 'extend' or 'hold'")
    grid = grid if grid is not None else solution.grid
    xf = grid.full
    xg = grid.x
    phi = np.asarray(solution.phi, dtype=float)
    zg = np.asarray(solution.z, dtype=float)
    s = np.diff(phi) / np.diff(xf)
    m = grid.m

    def _x(p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != 2:
            raise ValueError("the polyhedral extension is defined for two assets")
        return p[..., 0]

    def _exits(x):
        low, high = x < xg[0], x > xg[-1]
        if outside == "hold" and warn and (np.any(low) or np.any(high)):
            warnings.warn(f"market weight left [{xg[0]:g}, {xg[-1]:g}]; holding boundary weights",
                          RegimeExitWarning, stacklevel=3)
        return low, high

    def weights(p):
        x = _x(p)
        seg = np.clip(np.searchsorted(xf, x, side="right") - 1, 0, m)
        val = np.interp(x, xf, phi)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = x + x * (1 - x) * s[seg] / val
        k = np.clip(np.searchsorted(xg, x), 0, m - 1)
        z = np.where(xg[k] == x, zg[k], z)
        if outside == "hold":
            low, high = _exits(x)
            z = np.where(low, zg[0], np.where(high, zg[-1], z))
        z = np.clip(z, 0.0, 1.0)
        return np.stack([z, 1.0 - z], axis=-1)

    def log_phi(p):
        x = _x(p)
        with np.errstate(divide="ignore"):
            out = np.log(np.interp(x, xf, phi))
        if outside == "hold":
            low, high = x < xg[0], x > xg[-1]
            with np.errstate(divide="ignore", invalid="ignore"):
                left = np.log(phi[1]) + zg[0] * np.log(x / xg[0]) + (1 - zg[0]) * np.log((1 - x) / (1 - xg[0]))
                right = np.log(phi[m]) + zg[-1] * np.log(x / xg[-1]) + (1 - zg[-1]) * np.log((1 - x) / (1 - xg[-1]))
            out = np.where(low, left, np.where(high, right, out))
        return out

    gen = GeneratingFunction(lambda p: np.exp(log_phi(p)), log_func=log_phi, name="polyhedral",
                             params={"m": m, "outside": outside})
    pm = PortfolioMap(weights, kind="grid", name=f"optimized ({outside})")
    return FGPair(pm, gen)
