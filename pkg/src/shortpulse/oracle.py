"""Closed-form linear solution for radial data, used as a reference.

For Q = 0 the reduced variable psi = r phi solves the 1+1 wave equation on the
half line with psi = 0 at r = 0; extending the data oddly to r < 0 gives the
d'Alembert formula below.
"""

from __future__ import annotations

import numpy as np

from .pulsedata import ShortPulseData


def _odd_profile(data: ShortPulseData, x):
    x = np.asarray(x, dtype=float)
    return x * data.phi0(np.abs(x))


def _even_primitive(data: ShortPulseData, x):
    """Antiderivative of y -> y*phi1(|y|), which is even in y."""
    a = np.abs(np.asarray(x, dtype=float))
    return -a * data.phi0(a) + data.phi0_integral(a)


def linear_psi(data: ShortPulseData, u, ubar):
    """psi(u, ubar) for the free wave with the given initial slice data at t = 1."""
    u = np.asarray(u, dtype=float)
    ubar = np.asarray(ubar, dtype=float)
    plus = 2.0 * ubar - 1.0  # r + (t - 1)
    minus = 1.0 - 2.0 * u  # r - (t - 1)
    return 0.5 * (_odd_profile(data, plus) + _odd_profile(data, minus)) + 0.5 * (
        _even_primitive(data, plus) - _even_primitive(data, minus)
    )


def linear_psi_grid(data: ShortPulseData, grid):
    uu, bb = np.meshgrid(grid.u, grid.ubar, indexing="ij")
    out = linear_psi(data, uu, bb)
    return np.where(grid.admissible(), out, np.nan)
