"""Exact event-driven Monte Carlo for the velocity-switching process.

Paths are piecewise linear, so nothing is discretised in time: the switch
epochs are sampled directly and positions follow from summing segment
lengths. Ensembles are processed in fixed-size chunks of path indices; each
path draws from its own counter-based stream (:func:`telegraph.core.path_rng`),
so every estimator is bit-identical whatever the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    FieldPair,
    Grid1D,
    GridTooSmall,
    ModelParams,
    PathStream,
    TimeOutOfRange,
    _path_state,
    _uniform_from_state,
)

CHUNK_SIZE = 1 << 16

SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class SwitchRecord:
    """Initial velocity sign and the ordered switch epochs in ``(0, t_max]``."""

    sign0: int
    times: tuple[float, ...]
    t_max: float

    def __post_init__(self):
        if self.sign0 not in (1, -1):
            raise ValueError(f"sign0 must be +1 or -1, got {self.sign0}")
        prev = 0.0
        for s in self.times:
            if not (prev < s <= self.t_max):
                raise ValueError("switch times must be strictly increasing in (0, t_max]")
            prev = s

    def n_switches(self, t: float | None = None) -> int:
        if t is None:
            return len(self.times)
        return sum(1 for s in self.times if s <= t)


@dataclass(frozen=True)
class EnsembleEstimate:
    value: float
    std_error: float
    n_paths: int


@dataclass
class EnsembleSample:
    """Per-path outcomes at one time ``t``, in path-index order."""

    t: float
    start_sign: np.ndarray
    displacement: np.ndarray
    final_sign: np.ndarray
    n_switches: np.ndarray


@dataclass
class DensityEstimate:
    """Histogram of switched paths plus the two never-switched atoms.

    ``atom_plus`` is the probability mass sitting exactly at ``x0 + v t``
    and ``atom_minus`` the mass at ``x0 - v t``.
    """

    fields: FieldPair
    atom_plus: float
    atom_minus: float
    n_paths: int
    x0: float
    t: float


def _start_code(sign0) -> int:
    if isinstance(sign0, str):
        if sign0 == SYMMETRIC:
            return 0
        raise ValueError(f"unknown start {sign0!r}")
    if sign0 in (1, -1):
        return int(sign0)
    raise ValueError(f"start sign must be +1, -1 or {SYMMETRIC!r}, got {sign0!r}")


# ---------------------------------------------------------------- single paths


def sample_switches(p: ModelParams, t_max: float, stream: PathStream, sign0=1) -> SwitchRecord:
    """Sample the switch epochs of one path up to ``t_max``.

    Gaps are i.i.d. exponential with rate ``p.lam``; generation stops at the
    first epoch beyond ``t_max``. ``sign0="symmetric"`` draws the initial
    sign from the stream's reserved draw.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    code = _start_code(sign0)
    s0 = stream.initial_sign() if code == 0 else code
    times: list[float] = []
    if p.lam > 0:
        elapsed = 0.0
        while True:
            elapsed = elapsed + stream.exponential(p.lam)
            if elapsed > t_max:
                break
            times.append(elapsed)
    return SwitchRecord(s0, tuple(times), t_max)


def _time_moving_right(rec: SwitchRecord, t: float) -> float:
    tplus = 0.0
    prev = 0.0
    sign = rec.sign0
    for s in rec.times:
        if s > t:
            break
        if sign > 0:
            tplus += s - prev
        prev = s
        sign = -sign
    if sign > 0:
        tplus += t - prev
    return min(tplus, t)


def _check_time(rec: SwitchRecord, t: float) -> None:
    if not (0.0 <= t <= rec.t_max):
        raise TimeOutOfRange(f"t={t} outside [0, {rec.t_max}]")


def displacement_integral(rec: SwitchRecord, p: ModelParams, t: float) -> float:
    """Integral of the velocity over ``[0, t]``."""
    _check_time(rec, t)
    return p.v * (2.0 * _time_moving_right(rec, t) - t)


def position_at(x0: float, rec: SwitchRecord, p: ModelParams, t: float) -> tuple[float, int]:
    """Position and velocity sign at time ``t`` of the path started at ``x0``."""
    _check_time(rec, t)
    sign = rec.sign0 * (-1) ** rec.n_switches(t)
    return x0 + displacement_integral(rec, p, t), sign


# ------------------------------------------------------------ vectorised paths


def _simulate_chunk(seed: int, start: int, stop: int, t: float, p: ModelParams, code: int):
    idx = np.arange(start, stop, dtype=np.uint64)
    state = _path_state(seed, idx)
    n = idx.size
    if code == 0:
        s0 = np.where(_uniform_from_state(state, 0) < 0.5, 1, -1).astype(np.int8)
    else:
        s0 = np.full(n, code, dtype=np.int8)
    sign = s0.copy()
    tplus = np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    elapsed = np.zeros(n)
    active = np.arange(n)
    draw = 1
    while active.size and p.lam > 0:
        u = _uniform_from_state(state[active], draw)
        with np.errstate(over="ignore"):
            nxt = elapsed[active] + (-np.log1p(-u) / p.lam)
        switched = nxt <= t
        a_sw = active[switched]
        right = sign[a_sw] > 0
        tplus[a_sw[right]] += nxt[switched][right] - elapsed[a_sw[right]]
        elapsed[a_sw] = nxt[switched]
        sign[a_sw] = -sign[a_sw]
        count[a_sw] += 1
        active = a_sw
        draw += 1
    right = sign > 0
    tplus[right] += t - elapsed[right]
    np.minimum(tplus, t, out=tplus)
    disp = p.v * (2.0 * tplus - t)
    return s0, disp, sign, count


def _chunks(n_paths: int, offset: int = 0) -> list[tuple[int, int]]:
    return [(offset + a, offset + min(a + CHUNK_SIZE, n_paths)) for a in range(0, n_paths, CHUNK_SIZE)]


def _map_chunks(fn: Callable, chunks: Sequence, workers: int) -> list:
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, chunks))


def sample_ensemble(
    p: ModelParams,
    sign0,
    t: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
    path_offset: int = 0,
) -> EnsembleSample:
    """Simulate paths ``path_offset .. path_offset + n_paths - 1`` up to ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    code = _start_code(sign0)
    parts = _map_chunks(
        lambda c: _simulate_chunk(seed, c[0], c[1], t, p, code), _chunks(n_paths, path_offset), workers
    )
    s0, disp, sign, count = (np.concatenate(a) for a in zip(*parts))
    return EnsembleSample(t, s0.astype(np.int64), disp, sign.astype(np.int64), count)


def _combine(stats: list[tuple[int, float, float]]) -> tuple[int, float, float]:
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in stats:
        if nb == 0:
            continue
        tot = n + nb
        delta = mb - mean
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    return n, mean, m2


def estimate_expectation(
    F: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x0: float,
    sign0,
    t: float,
    p: ModelParams,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> EnsembleEstimate:
    """Monte Carlo estimate of ``E[F(x(t), sign(t))]`` for paths started at ``(x0, sign0)``.

    ``F`` must accept arrays of positions and signs. Per-chunk means and
    squared deviations are merged in chunk order, which fixes the floating
    point reduction independently of ``workers``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    code = _start_code(sign0)

    def chunk_stats(c):
        _, disp, sign, _ = _simulate_chunk(seed, c[0], c[1], t, p, code)
        y = np.broadcast_to(np.asarray(F(x0 + disp, sign), dtype=float), disp.shape)
        m = float(y.mean())
        return y.size, m, float(((y - m) ** 2).sum())

    n, mean, m2 = _combine(_map_chunks(chunk_stats, _chunks(n_paths), workers))
    se = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
    return EnsembleEstimate(mean, se, n)


def empirical_density(
    x0: float,
    sign0,
    t: float,
    p: ModelParams,
    grid: Grid1D,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> DensityEstimate:
    """Histogram the positions at ``t`` split by final velocity sign.

    Paths that never switched sit exactly on the cone edges and are returned
    as atom weights rather than binned.
    """
    if not grid.covers(x0 - p.v * t, x0 + p.v * t):
        raise GridTooSmall(
            f"grid [{grid.x_min}, {grid.x_max}] does not cover [{x0 - p.v * t}, {x0 + p.v * t}]"
        )
    code = _start_code(sign0)

    def chunk_counts(c):
        _, disp, sign, count = _simulate_chunk(seed, c[0], c[1], t, p, code)
        moved = count > 0
        idx = grid.index_of(x0 + disp[moved])
        fs = sign[moved]
        cp = np.bincount(idx[fs > 0], minlength=grid.nx)
        cm = np.bincount(idx[fs < 0], minlength=grid.nx)
        still = ~moved
        return cp, cm, int(np.sum(still & (sign > 0))), int(np.sum(still & (sign < 0)))

    parts = _map_chunks(chunk_counts, _chunks(n_paths), workers)
    cp = sum(q[0] for q in parts)
    cm = sum(q[1] for q in parts)
    ap = sum(q[2] for q in parts)
    am = sum(q[3] for q in parts)
    norm = 1.0 / (n_paths * grid.dx)
    fields = FieldPair(cp * norm, cm * norm, grid)
    return DensityEstimate(fields, ap / n_paths, am / n_paths, n_paths, x0, t)
