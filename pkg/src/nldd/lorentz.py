"""Empirical Lorentz quasi-norms via the decreasing rearrangement.

Samples carry a cell-volume measure.  The quasi-norm is the L^sigma(dt/t)
norm of t^(1/p) f*(t) with f* the decreasing rearrangement, evaluated as a
right-endpoint sum over the rearrangement steps (exact for step functions,
which the empirical f* is).
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

__all__ = ["lorentz_quasi_norm", "target_exponent"]


def target_exponent(d: int, s: float, p: float) -> float:
    """p (d + 2s) / (d + 2s - 2 s p), computed in exact rational arithmetic.

    Parameters given as short decimals (s = 0.5, p = 1.2) are interpreted
    exactly, so the returned exponent carries no float rounding.
    """
    ds = Fraction(str(s))
    dp = Fraction(str(p))
    dim = Fraction(d) + 2 * ds
    denom = dim - 2 * ds * dp
    if denom <= 0:
        raise ValueError("p must be below (d + 2s) / (2s)")
    return float(dp * dim / denom)


def lorentz_quasi_norm(samples, cell_volume: float, p: float, sigma: float) -> float:
    """Quasi-norm ||f||_{p,sigma} of gridded samples with uniform cell measure.

    sigma = inf gives the weak norm sup_t t^(1/p) f*(t).
    """
    if p <= 0:
        raise ValueError("p must be positive")
    f = np.sort(np.abs(np.asarray(samples, dtype=float)).ravel())[::-1]
    f = f[f > 0]
    if f.size == 0:
        return 0.0
    t_right = cell_volume * np.arange(1, f.size + 1)
    if np.isinf(sigma):
        return float((t_right ** (1.0 / p) * f).max())
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    # integral of t^(sigma/p - 1) over each rearrangement step, exactly
    t_left = t_right - cell_volume
    e = sigma / p
    step = (t_right**e - t_left**e) / e
    return float((f**sigma * step).sum() ** (1.0 / sigma))
