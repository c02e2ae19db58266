"""Shared domain types, parameter validation, grids and per-path random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ModelParams",
    "SpacetimeEvent",
    "Grid1D",
    "FieldPair",
    "PathStream",
    "path_rng",
    "path_uniforms",
    "validate_params",
    "TelegraphError",
    "NonPositiveSpeed",
    "NegativeRate",
    "SuperluminalSpeed",
    "TimeOutOfRange",
    "GridTooSmall",
    "DomainNotCovered",
    "InsufficientSnapshots",
    "NonUnitCFL",
]


class TelegraphError(Exception):
    """Base class for domain errors raised by this package."""


class NonPositiveSpeed(TelegraphError, ValueError):
    pass


class NegativeRate(TelegraphError, ValueError):
    pass


class SuperluminalSpeed(TelegraphError, ValueError):
    pass


class TimeOutOfRange(TelegraphError, ValueError):
    pass


class GridTooSmall(TelegraphError, ValueError):
    pass


class DomainNotCovered(TelegraphError, ValueError):
    pass


class InsufficientSnapshots(TelegraphError, ValueError):
    pass


class NonUnitCFL(TelegraphError, AssertionError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Speed ``v``, switching rate ``lam`` and (optionally) light speed ``c``."""

    v: float
    lam: float
    c: float | None = None

    def with_rate(self, lam: float) -> "ModelParams":
        return replace(self, lam=lam)


def validate_params(p: ModelParams, relativistic: bool = False) -> ModelParams:
    """Return ``p`` unchanged if it is admissible, raise otherwise.

    ``v >= c`` is only rejected when ``relativistic`` is set; in that case
    ``c`` must be given.
    """
    if not (p.v > 0) or not math.isfinite(p.v):
        raise NonPositiveSpeed(f"speed must be positive and finite, got v={p.v}")
    if not (p.lam >= 0) or not math.isfinite(p.lam):
        raise NegativeRate(f"rate must be nonnegative and finite, got lambda={p.lam}")
    if p.c is not None and not (p.c > 0):
        raise NonPositiveSpeed(f"light speed must be positive, got c={p.c}")
    if relativistic:
        if p.c is None:
            raise SuperluminalSpeed("relativistic operation requires a light speed c")
        if p.v >= p.c:
            raise SuperluminalSpeed(f"v={p.v} is not below c={p.c}")
    return p


@dataclass(frozen=True)
class SpacetimeEvent:
    t: float
    x: float


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centred grid on ``[x_min, x_max]`` with ``nx`` cells."""

    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise ValueError(f"need x_min < x_max, got {self.x_min}, {self.x_max}")
        if int(self.nx) != self.nx or self.nx < 2:
            raise ValueError(f"need an integer nx >= 2, got {self.nx}")

    @classmethod
    def around(cls, center: float, half_width: float, dx: float, on: str = "edge") -> "Grid1D":
        """Grid of spacing ``dx`` covering ``center +- half_width``.

        With ``on="edge"`` the point ``center`` is a cell boundary, with
        ``on="cell"`` it is a cell centre.
        """
        n_half = int(math.ceil(half_width / dx - 1e-9))
        if on == "edge":
            return cls(center - n_half * dx, center + n_half * dx, 2 * n_half)
        if on == "cell":
            return cls(center - (n_half + 0.5) * dx, center + (n_half + 0.5) * dx, 2 * n_half + 1)
        raise ValueError(f"unknown alignment {on!r}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + np.arange(self.nx + 1) * self.dx

    def covers(self, lo: float, hi: float) -> bool:
        tol = 1e-12 * max(1.0, abs(self.x_min), abs(self.x_max))
        return self.x_min <= lo + tol and hi <= self.x_max + tol

    def index_of(self, x) -> np.ndarray:
        """Index of the cell containing ``x`` (right edge belongs to the last cell)."""
        idx = np.floor((np.asarray(x, dtype=float) - self.x_min) / self.dx).astype(np.int64)
        return np.clip(idx, 0, self.nx - 1)

    def point_mass(self, x0: float, mass: float = 1.0) -> np.ndarray:
        """Density array of a point mass at ``x0``, deposited cloud-in-cell.

        A point on a cell centre lands in that single cell; a point on a cell
        edge is split evenly between the two neighbours.
        """
        out = np.zeros(self.nx)
        s = (x0 - self.x_min) / self.dx - 0.5
        i = int(math.floor(s + 1e-12))
        frac = s - i
        if abs(frac) < 1e-9:
            frac = 0.0
        if not (0 <= i < self.nx) or (frac > 0 and i + 1 >= self.nx):
            raise GridTooSmall(f"point {x0} is outside the grid interior")
        out[i] += (1.0 - frac) * mass / self.dx
        if frac > 0:
            out[i + 1] += frac * mass / self.dx
        return out


@dataclass
class FieldPair:
    """Densities of the right-moving (``f_plus``) and left-moving (``f_minus``) states."""

    f_plus: np.ndarray
    f_minus: np.ndarray
    grid: Grid1D = field(repr=False)

    def __post_init__(self):
        self.f_plus = np.asarray(self.f_plus, dtype=float)
        self.f_minus = np.asarray(self.f_minus, dtype=float)
        if self.f_plus.shape != (self.grid.nx,) or self.f_minus.shape != (self.grid.nx,):
            raise ValueError("field arrays must match the grid cell count")

    @property
    def total(self) -> np.ndarray:
        return self.f_plus + self.f_minus

    def mass(self) -> float:
        return float(self.grid.dx * (self.f_plus.sum() + self.f_minus.sum()))


# --------------------------------------------------------------------------
# Per-path random streams.
#
# Draw k of path i is a pure function of (seed, i, k): a SplitMix64 stream
# whose starting state is a hash of (seed, i). This keeps every path
# reproducible regardless of how the ensemble is split between workers, and
# lets whole chunks of paths be generated with vectorised numpy arithmetic.

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_PATH_GAMMA = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _path_state(seed: int, path_index) -> np.ndarray:
    with np.errstate(over="ignore"):
        key = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        i = np.asarray(path_index, dtype=np.uint64)
        return _mix64(key ^ _mix64((i + np.uint64(1)) * _PATH_GAMMA))


def _uniform_from_state(state: np.ndarray, draw: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = _mix64(state + np.uint64(draw + 1) * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * _TWO_M53


def path_uniforms(seed: int, path_index, draw: int) -> np.ndarray:
    """Uniform [0, 1) draw number ``draw`` for each path in ``path_index``."""
    return _uniform_from_state(_path_state(seed, path_index), draw)


class PathStream:
    """Sequential view of one path's random stream.

    Draw 0 is reserved for the initial velocity sign of symmetric starts;
    interarrival gaps use draws 1, 2, ... This matches the vectorised
    ensemble kernels draw for draw.
    """

    def __init__(self, seed: int, path_index: int):
        self.seed = int(seed)
        self.path_index = int(path_index)
        self._next = 1

    def uniform(self, draw: int) -> float:
        return float(path_uniforms(self.seed, np.array([self.path_index]), draw)[0])

    def initial_sign(self) -> int:
        return 1 if self.uniform(0) < 0.5 else -1

    def exponential(self, rate: float) -> float:
        u = self.uniform(self._next)
        self._next += 1
        with np.errstate(over="ignore"):
            return float(-np.log1p(-u) / rate)


def path_rng(seed: int, path_index: int) -> PathStream:
    """Random stream of path ``path_index``; a pure function of its arguments."""
    return PathStream(seed, path_index)
