"""Exponentially scaled modified Bessel functions ``I0`` and ``I1``.

Power series below ``z = 20``, Hankel asymptotic expansion above. Both
return ``exp(-z) * I_n(z)`` so that arguments in the thousands (large
switching rates) do not overflow.
"""

from __future__ import annotations

import math

import numpy as np

SWITCH_ARG = 20.0
_SERIES_TERMS = 80
_ASYMPTOTIC_TERMS = 60


def _series(z: np.ndarray, order: int) -> np.ndarray:
    half = 0.5 * z
    q = half * half
    term = np.ones_like(z) if order == 0 else half.copy()
    total = term.copy()
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + order))
        total += term
    return total * np.exp(-z)


def _asymptotic(z: np.ndarray, order: int) -> np.ndarray:
    mu = 4.0 * order * order
    term = np.ones_like(z)
    total = np.ones_like(z)
    last = np.full_like(z, np.inf)
    done = np.zeros(z.shape, dtype=bool)
    for k in range(1, _ASYMPTOTIC_TERMS):
        term = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        mag = np.abs(term)
        # stop each entry once the divergent tail starts growing
        done |= mag >= last
        total = np.where(done, total, total + term)
        last = np.where(done, last, mag)
        if np.all(done | (mag < 1e-17 * np.abs(total))):
            break
    return total / np.sqrt(2.0 * math.pi * z)


def _scaled(z, order: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    out = np.empty_like(a)
    small = a < SWITCH_ARG
    if np.any(small):
        out[small] = _series(a[small], order)
    if np.any(~small):
        out[~small] = _asymptotic(a[~small], order)
    if order == 1:
        out = np.where(z < 0, -out, out)
    return out


def i0e(z) -> np.ndarray:
    """``exp(-|z|) * I0(z)``."""
    return _scaled(z, 0)


def i1e(z) -> np.ndarray:
    """``exp(-|z|) * I1(z)``."""
    return _scaled(z, 1)


def i1e_over_z(z) -> np.ndarray:
    """``exp(-|z|) * I1(z) / z`` with the removable singularity at 0 filled in (= 1/2)."""
    z = np.asarray(z, dtype=float)
    tiny = np.abs(z) < 1e-8
    safe = np.where(tiny, 1.0, z)
    return np.where(tiny, 0.5, i1e(safe) / safe)
