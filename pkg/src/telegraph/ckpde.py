"""Forward and backward Chapman-Kolmogorov solvers and the closed-form density.

The solver runs at unit CFL (``dt = dx / v``), where upwind transport is an
exact one-cell shift. Switching is applied as the exact 2x2 matrix
exponential, split symmetrically around each shift (Strang splitting). Mass
therefore moves at most one cell per step and never leaks outside the light
cone of the initial support.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bessel import i0e, i1e_over_z
from .core import FieldPair, Grid1D, GridTooSmall, InsufficientSnapshots, ModelParams, NonUnitCFL

LOST_MASS_TOL = 1e-12

__all__ = [
    "SolveResult",
    "TelegraphResidual",
    "switching_step",
    "solve_forward",
    "solve_backward",
    "telegraph_residual",
    "analytic_density",
    "analytic_cell_average",
]


@dataclass
class SolveResult:
    """Snapshots of a forward solve; ``f_plus[k]`` is the right-moving density at ``times[k]``."""

    times: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray
    grid: Grid1D = field(repr=False)
    params: ModelParams
    dt: float
    n_steps: int
    initial_mass: float
    lost_mass: float

    @property
    def dx(self) -> float:
        return self.grid.dx

    @property
    def fields(self) -> list[FieldPair]:
        return [FieldPair(a, b, self.grid) for a, b in zip(self.f_plus, self.f_minus)]

    def masses(self) -> np.ndarray:
        return self.grid.dx * (self.f_plus.sum(axis=1) + self.f_minus.sum(axis=1))

    def mass_drift(self) -> np.ndarray:
        """Relative change of total mass at each snapshot."""
        return np.abs(self.masses() - self.initial_mass) / self.initial_mass


def switching_step(fp: FieldPair, lam: float, dt: float) -> FieldPair:
    """Relax the two states for ``dt`` with the exact switching exponential."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    mu = math.exp(-2.0 * lam * dt) if math.isfinite(dt) else 0.0
    keep, swap = 0.5 * (1.0 + mu), 0.5 * (1.0 - mu)
    return FieldPair(keep * fp.f_plus + swap * fp.f_minus, swap * fp.f_plus + keep * fp.f_minus, fp.grid)


def _relax(fp_: np.ndarray, fm_: np.ndarray, keep: float, swap: float):
    return keep * fp_ + swap * fm_, swap * fp_ + keep * fm_


def _snap_steps(times, dt: float) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    steps = np.rint(times / dt).astype(np.int64)
    off = np.abs(steps * dt - times) > 1e-9 * np.maximum(1.0, np.abs(times))
    if np.any(off):
        warnings.warn(
            f"output times {times[off].tolist()} are not multiples of dt={dt}; snapped to the grid",
            stacklevel=3,
        )
    if np.any(steps < 0):
        raise ValueError("output times must be nonnegative")
    return steps


def _unit_cfl_dt(grid: Grid1D, v: float) -> float:
    dt = grid.dx / v
    if abs(dt * v - grid.dx) > 1e-12 * grid.dx:
        raise NonUnitCFL(f"dt*v={dt * v} differs from dx={grid.dx}")
    return dt


def solve_forward(
    p: ModelParams,
    init: FieldPair,
    t_final: float,
    output_times=None,
    every_step: bool = False,
) -> SolveResult:
    """Evolve ``init`` with the forward system up to ``t_final``.

    Snapshots are taken at ``output_times`` (default: ``t_final`` only), or
    after every step when ``every_step`` is set. Times that are not multiples
    of ``dt = dx / v`` are snapped with a warning. Mass pushed through the
    boundary is counted in ``lost_mass``; more than ``1e-12`` of the total
    raises :class:`GridTooSmall`.
    """
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    grid = init.grid
    dt = _unit_cfl_dt(grid, p.v)
    n_steps = int(_snap_steps([t_final], dt)[0])
    if every_step:
        out_steps = np.arange(n_steps + 1)
    else:
        out_steps = _snap_steps(t_final if output_times is None else output_times, dt)
        if np.any(out_steps > n_steps):
            raise ValueError("output times beyond t_final")
    order = np.argsort(out_steps, kind="stable")
    snaps_p = np.empty((out_steps.size, grid.nx))
    snaps_m = np.empty((out_steps.size, grid.nx))

    mu = math.exp(-p.lam * dt)
    keep, swap = 0.5 * (1.0 + mu), 0.5 * (1.0 - mu)
    fp_ = init.f_plus.copy()
    fm_ = init.f_minus.copy()
    total = float(fp_.sum() + fm_.sum())
    lost = 0.0
    j = 0
    for step in range(n_steps + 1):
        while j < order.size and out_steps[order[j]] == step:
            snaps_p[order[j]] = fp_
            snaps_m[order[j]] = fm_
            j += 1
        if step == n_steps:
            break
        fp_, fm_ = _relax(fp_, fm_, keep, swap)
        lost += fp_[-1] + fm_[0]
        fp_[1:] = fp_[:-1].copy()
        fp_[0] = 0.0
        fm_[:-1] = fm_[1:].copy()
        fm_[-1] = 0.0
        fp_, fm_ = _relax(fp_, fm_, keep, swap)
        if lost > LOST_MASS_TOL * total:
            raise GridTooSmall(
                f"mass reached the grid boundary at t={(step + 1) * dt:.6g} "
                f"(lost fraction {lost / total:.3g})"
            )
    return SolveResult(
        times=out_steps * dt,
        f_plus=snaps_p,
        f_minus=snaps_m,
        grid=grid,
        params=p,
        dt=dt,
        n_steps=n_steps,
        initial_mass=total * grid.dx,
        lost_mass=lost * grid.dx,
    )


def solve_backward(
    p: ModelParams,
    F_plus: Callable[[np.ndarray], np.ndarray],
    F_minus: Callable[[np.ndarray], np.ndarray],
    grid: Grid1D,
    t_final: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Expectation functions ``u(t_final, x, +v)`` and ``u(t_final, x, -v)`` at the grid centres.

    The terminal data ``F_plus``/``F_minus`` are evaluated on the grid padded by
    one cell per step on each side, so the result on ``grid`` needs no
    boundary condition.
    """
    dt = _unit_cfl_dt(grid, p.v)
    n = int(_snap_steps([t_final], dt)[0])
    dx = grid.dx
    x = grid.x_min + (np.arange(-n, grid.nx + n) + 0.5) * dx
    u1 = np.asarray(F_plus(x), dtype=float) * np.ones_like(x)
    u2 = np.asarray(F_minus(x), dtype=float) * np.ones_like(x)
    mu = math.exp(-p.lam * dt)
    keep, swap = 0.5 * (1.0 + mu), 0.5 * (1.0 - mu)
    for _ in range(n):
        u1, u2 = _relax(u1, u2, keep, swap)
        # u1 reads from the right, u2 from the left; the stale end cells
        # are never read back into the central window.
        u1 = np.roll(u1, -1)
        u2 = np.roll(u2, 1)
        u1, u2 = _relax(u1, u2, keep, swap)
    return u1[n : n + grid.nx], u2[n : n + grid.nx]


@dataclass
class TelegraphResidual:
    """L2 norms of the telegraph-equation residual; ``per_snapshot[k]`` is (plus, minus) at ``times[k]``."""

    plus: float
    minus: float
    times: np.ndarray
    per_snapshot: np.ndarray


def telegraph_residual(result: SolveResult, p: ModelParams, atom_sources=()) -> TelegraphResidual:
    """Discrete residual of ``f_tt + 2 lam f_t - v^2 f_xx`` for each component.

    Centred differences are taken at every interior snapshot of a run of
    uniformly spaced snapshots. Cells within two cells of an atom
    characteristic ``x0 +- v t`` (for each ``x0`` in ``atom_sources``) are
    excluded, as are the two boundary cells. ``plus``/``minus`` report the
    largest per-snapshot norm.
    """
    times = result.times
    if times.size < 3:
        raise InsufficientSnapshots("need at least three snapshots")
    h = np.diff(times)
    if np.any(h <= 0) or np.any(np.abs(h - h[0]) > 1e-9 * h[0]):
        raise InsufficientSnapshots("snapshots must be increasing and uniformly spaced")
    h = float(h[0])
    dx = result.grid.dx
    x = result.grid.centers[1:-1]
    out = np.empty((times.size - 2, 2))
    for k in range(1, times.size - 1):
        mask = np.ones(x.size, dtype=bool)
        for x0 in atom_sources:
            for edge in (x0 - p.v * times[k], x0 + p.v * times[k]):
                mask &= np.abs(x - edge) > 2.0 * dx
        for c, f in enumerate((result.f_plus, result.f_minus)):
            ftt = (f[k + 1] - 2.0 * f[k] + f[k - 1])[1:-1] / h**2
            ft = (f[k + 1] - f[k - 1])[1:-1] / (2.0 * h)
            fxx = (f[k, 2:] - 2.0 * f[k, 1:-1] + f[k, :-2]) / dx**2
            r = (ftt + 2.0 * p.lam * ft - p.v**2 * fxx)[mask]
            out[k - 1, c] = math.sqrt(dx * float(np.sum(r * r)))
    return TelegraphResidual(float(out[:, 0].max()), float(out[:, 1].max()), times[1:-1], out)


# ------------------------------------------------------------- closed form


def analytic_density(p: ModelParams, t: float, x, start="symmetric", x0: float = 0.0):
    """Law of the position at time ``t`` for a particle started at ``x0``.

    Returns ``(ac, w_plus, w_minus)``: the absolutely continuous density at
    ``x`` (zero outside the open cone ``|x - x0| < v t``) and the point masses
    at ``x0 + v t`` and ``x0 - v t``. ``start`` is ``"symmetric"`` (each
    initial sign with probability 1/2), ``+1`` or ``-1``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    v, lam = p.v, p.lam
    y = x - x0
    w_still = math.exp(-lam * t)
    if start == "symmetric":
        w_plus = w_minus = 0.5 * w_still
    elif start in (1, -1):
        w_plus, w_minus = (w_still, 0.0) if start == 1 else (0.0, w_still)
    else:
        raise ValueError(f"unknown start {start!r}")
    inside = np.abs(y) < v * t
    ys = np.where(inside, y, 0.0)
    r = np.sqrt(np.maximum(t * t - (ys / v) ** 2, 0.0))
    z = lam * r
    damp = np.exp(z - lam * t)
    if start == "symmetric":
        coef = np.full_like(ys, t)
    else:
        coef = t + start * ys / v
    ac = lam / (2.0 * v) * damp * (i0e(z) + lam * coef * i1e_over_z(z))
    return np.where(inside, ac, 0.0), w_plus, w_minus


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def analytic_cell_average(p: ModelParams, t: float, grid: Grid1D, start="symmetric", x0: float = 0.0):
    """Cell averages of the continuous part over ``grid`` (Gauss-Legendre, split at the cone edges).

    Returns ``(ac_avg, w_plus, w_minus)``.
    """
    lo, hi = x0 - p.v * t, x0 + p.v * t
    e = grid.edges
    a = np.clip(e[:-1], lo, hi)
    b = np.clip(e[1:], lo, hi)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals, wp, wm = analytic_density(p, t, pts, start, x0)
    integral = half * (vals @ _GL_WEIGHTS)
    return integral / grid.dx, wp, wm
