"""Small numerical differentiation helpers."""
from __future__ import annotations

from typing import Callable

import numpy as np

FD_REL_STEP = 1e-6


def fd_steps(x: np.ndarray, rel_step: float = FD_REL_STEP) -> np.ndarray:
    return rel_step * np.maximum(1.0, np.abs(x))


def central_gradient(f: Callable[[np.ndarray], float], x, rel_step: float = FD_REL_STEP) -> np.ndarray:
    """Second-order central differences, step ``rel_step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    h = fd_steps(x, rel_step)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        g[i] = (f(xp) - f(xm)) / (2.0 * h[i])
    return g


def five_point_gradient(f: Callable[[np.ndarray], float], x, rel_step: float = 1e-3) -> np.ndarray:
    """Fourth-order central differences; for functions evaluated by quadrature."""
    x = np.asarray(x, dtype=float)
    h = fd_steps(x, rel_step)
    g = np.empty_like(x)
    for i in range(x.size):
        vals = []
        for k in (-2, -1, 1, 2):
            xk = x.copy()
            xk[i] += k * h[i]
            vals.append(f(xk))
        g[i] = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h[i])
    return g


def complex_step_gradient(f: Callable[[np.ndarray], complex], x, h: float = 1e-30) -> np.ndarray:
    """Complex-step derivative. ``f`` must be analytic and accept complex input."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        xc = x.astype(complex)
        xc[i] += 1j * h
        g[i] = np.imag(f(xc)) / h
    return g


def gradient_of(f, x, gradient=None, rel_step: float = FD_REL_STEP) -> np.ndarray:
    """Use ``gradient``, then ``f.gradient``, then central differences."""
    if gradient is None:
        gradient = getattr(f, "gradient", None)
    if gradient is not None:
        return np.asarray(gradient(np.asarray(x, dtype=float)), dtype=float)
    return central_gradient(f, x, rel_step)
