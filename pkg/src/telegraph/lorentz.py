"""Lorentz boosts, velocity addition, rate rescaling and the covariance check.

A process whose switching mechanism has rate ``lam`` in its own rest frame is
seen in the laboratory, where the particle moves at ``+-v``, with the dilated
rate ``sqrt(1 - v^2/c^2) * lam``. In a frame moving at ``V`` the two
velocities become ``v'`` and ``v''`` and each state's rate is dilated with
its own speed. :func:`covariance_residual` checks numerically that a lab
solution, pulled back into the moving frame, satisfies that transformed
system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ckpde import SolveResult
from .core import (
    DomainNotCovered,
    Grid1D,
    ModelParams,
    SpacetimeEvent,
    SuperluminalSpeed,
    validate_params,
)

__all__ = [
    "Boost",
    "TransformedRates",
    "CovarianceResidual",
    "boost_event",
    "inverse_boost",
    "boost_coords",
    "add_velocities",
    "rescale_rate",
    "proper_time_factor",
    "transformed_params",
    "lab_frame_params",
    "covariance_residual",
]


@dataclass(frozen=True)
class Boost:
    """Change to a frame moving at speed ``V``."""

    V: float
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not abs(self.V) < self.c:
            raise SuperluminalSpeed(f"|V|={abs(self.V)} is not below c={self.c}")

    @property
    def gamma(self) -> float:
        return 1.0 / math.sqrt(1.0 - (self.V / self.c) ** 2)


@dataclass(frozen=True)
class TransformedRates:
    v_prime: float
    v_doubleprime: float
    lambda_prime: float
    lambda_doubleprime: float


def boost_coords(b: Boost, t, x):
    """Vectorised forward boost of coordinates ``(t, x)``."""
    g = b.gamma
    return g * (t - b.V * x / b.c**2), g * (x - b.V * t)


def inverse_boost_coords(b: Boost, t, x):
    g = b.gamma
    return g * (t + b.V * x / b.c**2), g * (x + b.V * t)


def boost_event(b: Boost, e: SpacetimeEvent) -> SpacetimeEvent:
    t, x = boost_coords(b, e.t, e.x)
    return SpacetimeEvent(t, x)


def inverse_boost(b: Boost, e: SpacetimeEvent) -> SpacetimeEvent:
    t, x = inverse_boost_coords(b, e.t, e.x)
    return SpacetimeEvent(t, x)


def add_velocities(v: float, V: float, c: float) -> float:
    """Velocity ``v`` seen from a frame moving at ``V``."""
    return (v - V) / (1.0 - v * V / c**2)


def proper_time_factor(v: float, c: float) -> float:
    """``dt / dtau = 1 / sqrt(1 - v^2/c^2)`` along a worldline of speed ``v``."""
    if not abs(v) < c:
        raise SuperluminalSpeed(f"|v|={abs(v)} is not below c={c}")
    return 1.0 / math.sqrt(1.0 - (v / c) ** 2)


def rescale_rate(lam: float, v: float, c: float) -> float:
    """Rate ``lam`` of a mechanism moving at speed ``v``, as seen by the observer."""
    if not abs(v) < c:
        raise SuperluminalSpeed(f"|v|={abs(v)} is not below c={c}")
    return math.sqrt(1.0 - (v / c) ** 2) * lam


def transformed_params(p: ModelParams, b: Boost) -> TransformedRates:
    validate_params(p, relativistic=True)
    c = p.c
    v1 = add_velocities(p.v, b.V, c)
    v2 = add_velocities(-p.v, b.V, c)
    return TransformedRates(v1, v2, rescale_rate(p.lam, v1, c), rescale_rate(p.lam, v2, c))


def lab_frame_params(p: ModelParams) -> ModelParams:
    """Parameters for the laboratory solve: the rest-frame rate dilated by the particle speed."""
    validate_params(p, relativistic=True)
    return p.with_rate(rescale_rate(p.lam, p.v, p.c))


@dataclass
class CovarianceResidual:
    plus: float
    minus: float
    n_points: int


def _bilinear(stack: np.ndarray, ti: np.ndarray, xi: np.ndarray) -> np.ndarray:
    i0 = np.floor(ti).astype(np.int64)
    j0 = np.floor(xi).astype(np.int64)
    i0 = np.clip(i0, 0, stack.shape[0] - 2)
    j0 = np.clip(j0, 0, stack.shape[1] - 2)
    a = ti - i0
    b = xi - j0
    return (
        (1 - a) * (1 - b) * stack[i0, j0]
        + (1 - a) * b * stack[i0, j0 + 1]
        + a * (1 - b) * stack[i0 + 1, j0]
        + a * b * stack[i0 + 1, j0 + 1]
    )


def covariance_residual(
    lab_solution: SolveResult,
    p: ModelParams,
    b: Boost,
    moving_grid: Grid1D,
    moving_times,
    atom_sources=(),
) -> CovarianceResidual:
    """Residual of the moving-frame system evaluated on the pulled-back lab solution.

    ``lab_solution`` must hold every step (``solve_forward(..., every_step=True)``)
    of a solve run with :func:`lab_frame_params`. Each component ``g`` is
    transported in the moving frame along ``(1, v')`` (resp. ``(1, v'')``),
    so its transport term is a directional derivative. It is taken as a
    centred difference along that direction, with the step chosen so the two
    stencil points pull back to lab points exactly one grid diagonal apart;
    the bilinear interpolation errors at the two points then share their
    cell offsets and cancel to leading order, keeping the check second order.

    Returns the space-time L2 norm of each residual over the moving sample
    points, skipping points within two cells of an atom characteristic of
    ``atom_sources``.
    """
    rates = transformed_params(p, b)
    expected = rescale_rate(p.lam, p.v, p.c)
    if not math.isclose(lab_solution.params.lam, expected, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError(
            f"lab solution used rate {lab_solution.params.lam}, expected the dilated rate {expected}"
        )
    if lab_solution.times.size != lab_solution.n_steps + 1:
        raise ValueError("lab solution must store every step")
    grid = lab_solution.grid
    dt, dx, v = lab_solution.dt, grid.dx, p.v
    t_moving = np.atleast_1d(np.asarray(moving_times, dtype=float))
    tp, xp = np.meshgrid(t_moving, moving_grid.centers, indexing="ij")
    tl, xl = inverse_boost_coords(b, tp, xp)

    def to_index(t, x):
        return t / dt, (x - grid.x_min) / dx - 0.5

    nt = lab_solution.times.size
    for s in (1.0, -1.0):
        for sign in (1.0, -1.0):
            ti, xi = to_index(tl + sign * dt, xl + sign * s * dx)
            if ti.min() < -1e-9 or ti.max() > nt - 1 + 1e-9 or xi.min() < -1e-9 or xi.max() > grid.nx - 1 + 1e-9:
                raise DomainNotCovered("moving-frame stencil leaves the stored lab solution")

    ti, xi = to_index(tl, xl)
    gp = _bilinear(lab_solution.f_plus, ti, xi)
    gm = _bilinear(lab_solution.f_minus, ti, xi)
    g = b.gamma
    V, c = b.V, p.c
    out = []
    for stack, vel, sgn, rate, coupling in (
        (lab_solution.f_plus, rates.v_prime, 1.0, rates.lambda_prime, gm - gp),
        (lab_solution.f_minus, rates.v_doubleprime, -1.0, rates.lambda_doubleprime, gp - gm),
    ):
        # moving-frame step eps along (1, vel) pulls back to (dt, sgn * dx)
        eps = dt / (g * (1.0 + V * vel / c**2))
        ahead = _bilinear(stack, *to_index(tl + dt, xl + sgn * dx))
        behind = _bilinear(stack, *to_index(tl - dt, xl - sgn * dx))
        r = (ahead - behind) / (2.0 * eps) - rate * coupling
        out.append(r)

    mask = np.ones(tl.shape, dtype=bool)
    for x0 in atom_sources:
        for sgn in (1.0, -1.0):
            mask &= np.abs(xl - (x0 + sgn * v * tl)) > 2.0 * dx
    area = moving_grid.dx * (float(np.mean(np.diff(t_moving))) if t_moving.size > 1 else 1.0)
    norms = [math.sqrt(area * float(np.sum(r[mask] ** 2))) for r in out]
    return CovarianceResidual(norms[0], norms[1], int(mask.sum()))
