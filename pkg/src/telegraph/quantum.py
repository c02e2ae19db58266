"""Random evolution of wave packets under the Hamiltonians ``+-v p``.

Each Hamiltonian translates the state rigidly, so along one switching
history the position density is the initial ``|psi_0|^2`` shifted by the
displacement integral of that history. Only position densities are tracked;
phases never enter the observables computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .ckpde import solve_forward
from .core import FieldPair, Grid1D, GridTooSmall, ModelParams
from .montecarlo import SwitchRecord, displacement_integral, sample_ensemble

__all__ = [
    "WavePacket",
    "AveragedDensity",
    "unitary_shift",
    "random_state_density",
    "averaged_density",
    "expected_observable",
    "lightcone_violation_mass",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class WavePacket:
    """Position density ``|psi|^2`` with compact support ``(a, b)``.

    ``kind`` is one of ``"uniform"``, ``"gaussian"`` (a normal profile
    truncated to ``(a, b)``, parameters ``mu``/``sigma``), ``"cosine"``
    (raised cosine) or ``"sampled"`` (piecewise constant on ``grid``).
    ``offset`` is the translation applied so far; ``a``/``b`` always refer to
    the untranslated profile.
    """

    kind: str
    a: float
    b: float
    mu: float = 0.0
    sigma: float = 1.0
    offset: float = 0.0
    grid: Grid1D | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("support needs a < b")
        if self.kind not in ("uniform", "gaussian", "cosine", "sampled"):
            raise ValueError(f"unknown packet kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def uniform(cls, a: float, b: float) -> "WavePacket":
        return cls("uniform", a, b)

    @classmethod
    def truncated_gaussian(cls, a: float, b: float, mu: float, sigma: float) -> "WavePacket":
        return cls("gaussian", a, b, mu=mu, sigma=sigma)

    @classmethod
    def raised_cosine(cls, a: float, b: float) -> "WavePacket":
        return cls("cosine", a, b)

    @classmethod
    def from_grid(cls, grid: Grid1D, values) -> "WavePacket":
        """Piecewise-constant packet from cell values, renormalised to unit mass."""
        vals = np.clip(np.asarray(values, dtype=float), 0.0, None)
        mass = grid.dx * vals.sum()
        if not mass > 0:
            raise ValueError("sampled density has no mass")
        nz = np.flatnonzero(vals)
        a = grid.x_min + nz[0] * grid.dx
        b = grid.x_min + (nz[-1] + 1) * grid.dx
        return cls("sampled", a, b, grid=grid, values=vals / mass)

    @property
    def support(self) -> tuple[float, float]:
        return self.a + self.offset, self.b + self.offset

    def shifted(self, d: float) -> "WavePacket":
        return replace(self, offset=self.offset + d)

    # profile functions in untranslated coordinates
    def _cdf0(self, y: np.ndarray) -> np.ndarray:
        a, b = self.a, self.b
        if self.kind == "uniform":
            return np.clip((y - a) / (b - a), 0.0, 1.0)
        if self.kind == "cosine":
            w = b - a
            yc = np.clip(y, a, b)
            return np.clip((yc - a) / w + np.sin(2.0 * math.pi * (yc - 0.5 * (a + b)) / w) / (2.0 * math.pi), 0.0, 1.0)
        if self.kind == "gaussian":
            za, zb = (a - self.mu) / self.sigma, (b - self.mu) / self.sigma
            yc = np.clip(y, a, b)
            return np.clip((ndtr((yc - self.mu) / self.sigma) - ndtr(za)) / (ndtr(zb) - ndtr(za)), 0.0, 1.0)
        g = self.grid
        cum = np.concatenate([[0.0], np.cumsum(self.values) * g.dx])
        return np.clip(np.interp(y, g.edges, cum), 0.0, 1.0)

    def _pdf0(self, y: np.ndarray) -> np.ndarray:
        a, b = self.a, self.b
        inside = (y > a) & (y < b)
        if self.kind == "uniform":
            val = np.full_like(y, 1.0 / (b - a))
        elif self.kind == "cosine":
            w = b - a
            val = (1.0 + np.cos(2.0 * math.pi * (y - 0.5 * (a + b)) / w)) / w
        elif self.kind == "gaussian":
            za, zb = (a - self.mu) / self.sigma, (b - self.mu) / self.sigma
            z = (y - self.mu) / self.sigma
            val = _INV_SQRT_2PI * np.exp(-0.5 * z * z) / (self.sigma * (ndtr(zb) - ndtr(za)))
        else:
            val = self.values[self.grid.index_of(y)]
        return np.where(inside, val, 0.0)

    def density(self, x) -> np.ndarray:
        return self._pdf0(np.asarray(x, dtype=float) - self.offset)

    def cdf(self, x) -> np.ndarray:
        return self._cdf0(np.asarray(x, dtype=float) - self.offset)

    def cell_average(self, grid: Grid1D) -> np.ndarray:
        """Exact cell averages of the density over ``grid``."""
        c = self.cdf(grid.edges)
        return np.diff(c) / grid.dx

    def moments(self) -> tuple[float, float]:
        """First and second moments in closed form (midpoint-exact for sampled packets)."""
        a, b = self.a, self.b
        w, m = b - a, 0.5 * (a + b)
        if self.kind == "uniform":
            mean, var = m, w * w / 12.0
        elif self.kind == "cosine":
            mean, var = m, w * w * (1.0 / 12.0 - 1.0 / (2.0 * math.pi**2))
        elif self.kind == "gaussian":
            za, zb = (a - self.mu) / self.sigma, (b - self.mu) / self.sigma
            z = ndtr(zb) - ndtr(za)
            pa, pb = _INV_SQRT_2PI * math.exp(-0.5 * za * za), _INV_SQRT_2PI * math.exp(-0.5 * zb * zb)
            mean = self.mu + self.sigma * (pa - pb) / z
            var = self.sigma**2 * (1.0 + (za * pa - zb * pb) / z - ((pa - pb) / z) ** 2)
        else:
            g = self.grid
            e = g.edges
            p = self.values * g.dx
            mean = float(np.sum(p * g.centers))
            # exact second moment of a piecewise-constant density
            m2 = float(np.sum(self.values * (e[1:] ** 3 - e[:-1] ** 3) / 3.0))
            var = m2 - mean * mean
        mean += self.offset
        return mean, var + mean * mean


@dataclass
class AveragedDensity:
    """Path-averaged position densities for the two starting signs, as cell averages on ``grid``.

    Monte Carlo results also keep the sampled translations (``shifts`` with
    probability ``weights``) so interval masses can be computed exactly.
    """

    rho_plus: np.ndarray
    rho_minus: np.ndarray
    grid: Grid1D = field(repr=False)
    t: float
    method: str
    shifts: tuple | None = field(default=None, repr=False)


def unitary_shift(w: WavePacket, sign: int, p: ModelParams, t: float) -> WavePacket:
    """Free evolution under ``sign * v * p`` for time ``t``: a rigid translation."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return w.shifted(sign * p.v * t)


def random_state_density(w: WavePacket, rec: SwitchRecord, p: ModelParams, t: float) -> WavePacket:
    """Density of the state reached along the switching history ``rec``."""
    return w.shifted(displacement_integral(rec, p, t))


def compose_segments(w: WavePacket, rec: SwitchRecord, p: ModelParams, t: float) -> WavePacket:
    """Same state as :func:`random_state_density`, built one free segment at a time."""
    prev, sign, out = 0.0, rec.sign0, w
    for s in rec.times:
        if s > t:
            break
        out = unitary_shift(out, sign, p, s - prev)
        prev, sign = s, -sign
    return unitary_shift(out, sign, p, t - prev)


def _mixture_cell_average(w: WavePacket, grid: Grid1D, shifts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    e = grid.edges
    out = np.zeros(grid.nx)
    for lo in range(0, shifts.size, 512):
        d = shifts[lo : lo + 512, None]
        c = w.cdf(e[None, :] - d)
        out += weights[lo : lo + 512] @ np.diff(c, axis=1)
    return out / grid.dx


def _binned_shifts(sample, t: float, v: float, h: float):
    """Collapse the sampled displacements onto bins of width ``h``.

    Never-switched paths keep their exact displacement ``+-v t``; the others
    are replaced by the mean displacement of their bin, which stays inside
    the cone and changes cell averages only at second order in ``h``.
    """
    n = sample.displacement.size
    still = sample.n_switches == 0
    d = sample.displacement[~still]
    shifts, weights = [], []
    for s in (1, -1):
        k = int(np.sum(still & (sample.start_sign == s)))
        if k:
            shifts.append(s * v * t)
            weights.append(k / n)
    if d.size:
        vt = v * t
        nb = max(1, int(math.ceil(2 * vt / h)))
        idx = np.clip(((d + vt) / (2 * vt) * nb).astype(np.int64), 0, nb - 1)
        cnt = np.bincount(idx, minlength=nb)
        tot = np.bincount(idx, weights=d, minlength=nb)
        nzb = cnt > 0
        mean = np.clip(tot[nzb] / cnt[nzb], -vt, vt)
        shifts.extend(mean.tolist())
        weights.extend((cnt[nzb] / n).tolist())
    return np.asarray(shifts), np.asarray(weights)


def averaged_density(
    w: WavePacket,
    p: ModelParams,
    t: float,
    grid: Grid1D,
    method: str = "mc",
    n_paths: int = 100_000,
    seed: int = 0,
    workers: int = 1,
    bin_fraction: float = 1.0 / 32.0,
) -> AveragedDensity:
    """Average the translated densities over switching histories, for each starting sign.

    ``method="mc"`` samples ``n_paths`` histories per sign (the minus sign
    uses the next block of path indices); ``method="pde"`` runs the forward
    solver from ``(|psi0|^2, 0)`` and ``(0, |psi0|^2)``.
    """
    lo, hi = w.support
    if not grid.covers(lo - p.v * t, hi + p.v * t):
        raise GridTooSmall("grid does not cover the packet's light cone")
    if method == "pde":
        init = w.cell_average(grid)
        zero = np.zeros(grid.nx)
        rho = []
        for fp in (FieldPair(init, zero, grid), FieldPair(zero, init, grid)):
            r = solve_forward(p, fp, t)
            rho.append(r.f_plus[-1] + r.f_minus[-1])
        return AveragedDensity(rho[0], rho[1], grid, t, "pde")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    rho, shifts = [], []
    for k, s in enumerate((1, -1)):
        sample = sample_ensemble(p, s, t, n_paths, seed, workers, path_offset=k * n_paths)
        if t == 0 or p.v * t == 0:
            sh, wt = np.array([0.0]), np.array([1.0])
        else:
            sh, wt = _binned_shifts(sample, t, p.v, bin_fraction * grid.dx)
        rho.append(_mixture_cell_average(w, grid, sh, wt))
        shifts.append((sh, wt))
    return AveragedDensity(rho[0], rho[1], grid, t, "mc", shifts=tuple(shifts))


def expected_observable(f: Callable[[np.ndarray], np.ndarray], rho: np.ndarray, grid: Grid1D) -> float:
    """``integral f(x) rho(x) dx`` by the midpoint rule on ``grid``."""
    return float(grid.dx * np.sum(np.asarray(f(grid.centers), dtype=float) * rho))


def lightcone_violation_mass(
    rho: AveragedDensity, w: WavePacket, p: ModelParams, probe: tuple[float, float]
) -> tuple[float, float]:
    """Probability of finding the particle in ``probe`` for each starting sign.

    For Monte Carlo densities the mass is summed exactly over the sampled
    translations of ``w``; for solver output the cell masses are integrated
    with fractional overlap at the probe ends.
    """
    c, d = probe
    if not c < d:
        raise ValueError("probe interval needs c < d")
    if rho.shifts is not None:
        out = []
        for sh, wt in rho.shifts:
            out.append(float(np.sum(wt * (w.cdf(d - sh) - w.cdf(c - sh)))))
        return out[0], out[1]
    e = rho.grid.edges
    overlap = np.clip(np.minimum(e[1:], d) - np.maximum(e[:-1], c), 0.0, None)
    return float(np.sum(overlap * rho.rho_plus)), float(np.sum(overlap * rho.rho_minus))
