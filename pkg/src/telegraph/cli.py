"""Command-line front end.

Every run writes its outputs into ``--out`` (a directory). CSV files start
with ``#`` comment lines echoing the package version and the configuration;
JSON files carry the same information under ``"artifact_version"`` and
``"config"``. ``--workers`` and ``--out`` are left out of the echo so that
results are byte-identical across worker counts and output locations.

Exit codes: 0 ok, 2 configuration error, 3 grid/domain error, 4 coverage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .ckpde import solve_forward, telegraph_residual
from .core import (
    DomainNotCovered,
    FieldPair,
    Grid1D,
    GridTooSmall,
    ModelParams,
    TelegraphError,
    validate_params,
)
from .lorentz import Boost, covariance_residual, inverse_boost_coords, lab_frame_params
from .moments import InitialMoments, diffusive_limit_study, mean_closed_form, second_moment_closed_form
from .montecarlo import empirical_density, estimate_expectation
from .quantum import WavePacket, averaged_density, expected_observable, lightcone_violation_mass

EXIT_CONFIG, EXIT_GRID, EXIT_COVERAGE = 2, 3, 4
_NOT_ECHOED = {"workers", "out", "func"}


class ConfigError(Exception):
    pass


# ------------------------------------------------------------------ output


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _write_json(path: Path, args, payload: dict) -> None:
    doc = {"artifact_version": __version__, "config": _echo(args), **payload}
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def _write_table(path: Path, args, columns: list[str], rows, fmt: str, notes: dict | None = None) -> Path:
    rows = [list(r) for r in rows]
    if fmt == "json":
        path = path.with_suffix(".json")
        _write_json(path, args, {"columns": columns, "rows": rows, **(notes or {})})
        return path
    path = path.with_suffix(".csv")
    buf = io.StringIO()
    buf.write(f"# telegraph {__version__}\n")
    buf.write("# config: " + json.dumps(_clean(_echo(args)), sort_keys=True) + "\n")
    for k, v in (notes or {}).items():
        buf.write(f"# {k}: " + json.dumps(_clean(v), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.write_text(buf.getvalue())
    return path


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------- helpers


def _params(args, relativistic: bool = False) -> ModelParams:
    try:
        return validate_params(ModelParams(args.v, args.lam, getattr(args, "c", None)), relativistic)
    except TelegraphError as exc:
        raise ConfigError(str(exc)) from exc


def _start(text: str):
    if text in ("symmetric", "sym"):
        return "symmetric"
    if text in ("+1", "1", "+"):
        return 1
    if text in ("-1", "-"):
        return -1
    raise argparse.ArgumentTypeError(f"start must be +1, -1 or symmetric, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _grid(args, lo: float, hi: float, default_nx: int) -> Grid1D:
    x_min = lo if args.x_min is None else args.x_min
    x_max = hi if args.x_max is None else args.x_max
    nx = default_nx if args.nx is None else args.nx
    try:
        return Grid1D(x_min, x_max, nx)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _check_positive(name: str, value, allow_zero: bool = False) -> None:
    if value is None:
        return
    if not (value > 0 or (allow_zero and value == 0)):
        raise ConfigError(f"{name} must be {'nonnegative' if allow_zero else 'positive'}, got {value}")


# -------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    p = _params(args)
    _check_positive("--t", args.t)
    _check_positive("--n-paths", args.n_paths)
    start = args.start
    vt = p.v * args.t
    grid = _grid(args, args.x0 - vt, args.x0 + vt, 200)
    out = _outdir(args)
    dens = empirical_density(args.x0, start, args.t, p, grid, args.n_paths, args.seed, args.workers)
    rows = zip(grid.centers, dens.fields.f_plus, dens.fields.f_minus)
    atoms = {
        "atoms": [
            {"x": args.x0 + vt, "weight": dens.atom_plus},
            {"x": args.x0 - vt, "weight": dens.atom_minus},
        ]
    }
    _write_table(out / "density", args, ["x", "f_plus", "f_minus"], rows, args.format, atoms)

    est = {}
    for name, fn in (("mean", lambda x, s: x), ("second_moment", lambda x, s: x * x)):
        e = estimate_expectation(fn, args.x0, start, args.t, p, args.n_paths, args.seed, args.workers)
        est[name] = {"value": e.value, "std_error": e.std_error, "n_paths": e.n_paths}
    im = InitialMoments(args.x0, args.x0**2)
    signs = (1, -1) if start == "symmetric" else (start,)
    closed = {
        "mean": float(np.mean([mean_closed_form(im, p, args.t, s) for s in signs])),
        "second_moment": float(np.mean([second_moment_closed_form(im, p, args.t, s) for s in signs])),
    }
    _write_json(out / "moments.json", args, {"estimates": est, "closed_form": closed, **atoms})
    return 0


def _initial_fields(args, grid: Grid1D) -> FieldPair:
    x = grid.centers
    if args.init == "point":
        base = grid.point_mass(args.x0)
    elif args.init == "gaussian":
        base = np.exp(-0.5 * ((x - args.x0) / args.width) ** 2) / (math.sqrt(2 * math.pi) * args.width)
    else:
        base = WavePacket.uniform(args.x0 - args.width, args.x0 + args.width).cell_average(grid)
    start = args.start
    if start == "symmetric":
        return FieldPair(0.5 * base, 0.5 * base, grid)
    zero = np.zeros_like(base)
    return FieldPair(base, zero, grid) if start == 1 else FieldPair(zero, base, grid)


def cmd_solve(args) -> int:
    p = _params(args)
    _check_positive("--t", args.t, allow_zero=True)
    _check_positive("--width", args.width)
    if args.snapshots < 1:
        raise ConfigError("--snapshots must be >= 1")
    reach = p.v * args.t + (0 if args.init == "point" else 8 * args.width)
    grid = _grid(args, args.x0 - reach - 1.0, args.x0 + reach + 1.0, 1024)
    out = _outdir(args)
    init = _initial_fields(args, grid)
    dt = grid.dx / p.v
    n = int(round(args.t / dt))
    every = max(1, n // max(1, args.snapshots - 1))
    steps = np.arange(0, n + 1, every)[: args.snapshots]
    # each interior snapshot also gets its two neighbouring steps, for the residual
    centres = steps[(steps >= 1) & (steps + 1 <= n)]
    all_steps = np.union1d(steps, np.concatenate([centres - 1, centres, centres + 1]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        full = solve_forward(p, init, args.t, all_steps * dt)
    keep = np.searchsorted(all_steps, steps)
    res = replace(full, times=full.times[keep], f_plus=full.f_plus[keep], f_minus=full.f_minus[keep])
    rows = []
    for k, t in enumerate(res.times):
        for x, a, b in zip(grid.centers, res.f_plus[k], res.f_minus[k]):
            rows.append((t, x, a, b))
    _write_table(out / "snapshots", args, ["t", "x", "f_plus", "f_minus"], rows, args.format)

    drift = res.mass_drift()
    summary = {
        "dx": grid.dx,
        "dt": res.dt,
        "n_steps": res.n_steps,
        "times": res.times,
        "mass": res.masses(),
        "mass_drift": drift,
        "max_mass_drift": float(np.abs(drift).max()),
        "lost_mass": res.lost_mass,
        "min_value": float(min(full.f_plus.min(), full.f_minus.min())),
    }
    triples = []
    atoms = (args.x0,) if args.init == "point" else ()
    for c in centres:
        idx = np.searchsorted(all_steps, [c - 1, c, c + 1])
        sub = replace(full, times=full.times[idx], f_plus=full.f_plus[idx], f_minus=full.f_minus[idx])
        tr = telegraph_residual(sub, p, atom_sources=atoms)
        triples.append({"t": float(full.times[idx[1]]), "plus": tr.plus, "minus": tr.minus})
    summary["telegraph_residual"] = triples
    _write_json(out / "summary.json", args, summary)
    return 0


def _covariance_ladder(args):
    p = _params(args, relativistic=True)
    if not abs(args.V) < args.c:
        raise ConfigError(f"|V|={abs(args.V)} must be below c={args.c}")
    b = Boost(args.V, args.c)
    t_lo, t_hi = args.t_window
    x_lo, x_hi = args.x_window
    moving_grid = Grid1D(x_lo, x_hi, args.moving_nx)
    moving_times = np.linspace(t_lo, t_hi, args.moving_nt)
    ct, _ = inverse_boost_coords(b, np.array([t_lo, t_lo, t_hi, t_hi]), np.array([x_lo, x_hi, x_lo, x_hi]))
    lab = lab_frame_params(p)
    rows = []
    for level in args.levels:
        dx = 1.0 / level
        grid = Grid1D.around(0.0, args.half_width, dx)
        dt = dx / p.v
        t_final = (math.ceil(float(ct.max()) / dt) + 2) * dt
        x = grid.centers
        g = np.exp(-0.5 * (x / args.width) ** 2) / (math.sqrt(2 * math.pi) * args.width)
        sol = solve_forward(lab, FieldPair(0.5 * g, 0.5 * g, grid), t_final, every_step=True)
        r = covariance_residual(sol, p, b, moving_grid, moving_times)
        rows.append([dx, r.plus, r.minus])
    for k, row in enumerate(rows):
        if k == 0:
            row += [math.nan, math.nan]
        else:
            prev = rows[k - 1]
            ratio = prev[0] / row[0]
            row += [math.log(prev[1] / row[1]) / math.log(ratio), math.log(prev[2] / row[2]) / math.log(ratio)]
    return rows


def cmd_covariance(args) -> int:
    if len(args.levels) < 1:
        raise ConfigError("--levels needs at least one entry")
    rows = _covariance_ladder(args)
    out = _outdir(args)
    cols = ["dx", "residual_plus", "residual_minus", "observed_order_plus", "observed_order_minus"]
    _write_table(out / "covariance", args, cols, rows, args.format)
    return 0


def _packet(args) -> WavePacket:
    try:
        if args.packet == "uniform":
            return WavePacket.uniform(args.a, args.b)
        if args.packet == "cosine":
            return WavePacket.raised_cosine(args.a, args.b)
        mu = 0.5 * (args.a + args.b) if args.mu is None else args.mu
        sigma = (args.b - args.a) / 4 if args.sigma is None else args.sigma
        return WavePacket.truncated_gaussian(args.a, args.b, mu, sigma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_quantum(args) -> int:
    p = _params(args)
    _check_positive("--t", args.t, allow_zero=True)
    w = _packet(args)
    vt = p.v * args.t
    grid = _grid(args, args.a - vt - 0.5, args.b + vt + 0.5, 512)
    out = _outdir(args)
    rho = averaged_density(w, p, args.t, grid, args.method, args.n_paths, args.seed, args.workers)
    rows = zip(grid.centers, rho.rho_plus, rho.rho_minus)
    _write_table(out / "density", args, ["x", "rho_plus", "rho_minus"], rows, args.format)

    m1_0, m2_0 = w.moments()
    im = InitialMoments(m1_0, m2_0)
    obs = {}
    for s, r in ((1, rho.rho_plus), (-1, rho.rho_minus)):
        m1 = expected_observable(lambda x: x, r, grid)
        m2 = expected_observable(lambda x: x * x, r, grid)
        c1 = float(mean_closed_form(im, p, args.t, s))
        c2 = float(second_moment_closed_form(im, p, args.t, s))
        obs["plus" if s == 1 else "minus"] = {
            "norm": expected_observable(lambda x: np.ones_like(x), r, grid),
            "mean": m1,
            "second_moment": m2,
            "stdev": math.sqrt(max(m2 - m1 * m1, 0.0)),
            "closed_form": {"mean": c1, "second_moment": c2, "stdev": math.sqrt(max(c2 - c1 * c1, 0.0))},
        }
    lo = args.b + vt + 1.0 if args.probe_lo is None else args.probe_lo
    hi = lo + 1.0 if args.probe_hi is None else args.probe_hi
    mass = lightcone_violation_mass(rho, w, p, (lo, hi))
    cone = (args.a - vt, args.b + vt)
    outside = hi <= cone[0] or lo >= cone[1]
    report = {"probe": [lo, hi], "cone": list(cone), "probe_outside_cone": outside,
              "mass_plus": mass[0], "mass_minus": mass[1]}
    _write_json(out / "observables.json", args, {"observables": obs, "lightcone": report})
    return 0


def cmd_limit(args) -> int:
    _check_positive("--sigma", args.sigma)
    _check_positive("--t", args.t)
    if not args.lambdas or any(l <= 0 for l in args.lambdas):
        raise ConfigError("--lambdas must be positive")
    # solver resolution; each rate widens the domain to its light cone
    grid = _grid(args, -6.0, 6.0, 6144) if args.method == "pde" else None
    rows = diffusive_limit_study(args.sigma, args.lambdas, args.t, grid, args.method)
    table = [[r["lambda"], r["v"], r["l1"], r["decreasing"]] for r in rows]
    if args.reference:
        # heat kernel against itself
        table.append([math.inf, math.inf, 0.0, True])
    notes = {"all_decreasing": all(r["decreasing"] for r in rows)}
    _write_table(_outdir(args) / "limit", args, ["lambda", "v", "l1", "decreasing"], table, args.format, notes)
    return 0


# ----------------------------------------------------------------- parser


def _common(sp: argparse.ArgumentParser, v=1.0, lam=1.0, t=1.0) -> None:
    sp.add_argument("--v", type=float, default=v, help="particle speed")
    sp.add_argument("--lambda", dest="lam", type=float, default=lam, help="switching rate")
    sp.add_argument("--t", type=float, default=t, help="final time")
    sp.add_argument("--x-min", type=float, default=None)
    sp.add_argument("--x-max", type=float, default=None)
    sp.add_argument("--nx", type=int, default=None)
    sp.add_argument("--n-paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", default="out")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="telegraph", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"telegraph {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="Monte Carlo density and moments")
    _common(sp)
    sp.add_argument("--x0", type=float, default=0.0)
    sp.add_argument("--start", type=_start, default="symmetric")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("solve", help="forward Chapman-Kolmogorov solve")
    _common(sp)
    sp.add_argument("--x0", type=float, default=0.0)
    sp.add_argument("--start", type=_start, default="symmetric")
    sp.add_argument("--init", choices=("point", "gaussian", "uniform"), default="gaussian")
    sp.add_argument("--width", type=float, default=0.25)
    sp.add_argument("--snapshots", type=int, default=5)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("covariance", help="Lorentz covariance refinement ladder")
    _common(sp, v=0.8)
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--V", type=float, default=0.3)
    sp.add_argument("--levels", type=lambda s: [int(x) for x in s.split(",")], default=[128, 256, 512],
                    help="comma-separated 1/dx values")
    sp.add_argument("--width", type=float, default=0.25)
    sp.add_argument("--half-width", type=float, default=5.0)
    sp.add_argument("--t-window", type=_float_list, default=[0.4, 0.8])
    sp.add_argument("--x-window", type=_float_list, default=[-0.8, 0.8])
    sp.add_argument("--moving-nx", type=int, default=64)
    sp.add_argument("--moving-nt", type=int, default=11)
    sp.set_defaults(func=cmd_covariance)

    sp = sub.add_parser("quantum", help="path-averaged wave-packet densities")
    _common(sp)
    sp.add_argument("--packet", choices=("uniform", "gaussian", "cosine"), default="uniform")
    sp.add_argument("--a", type=float, default=-0.1)
    sp.add_argument("--b", type=float, default=0.1)
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--method", choices=("mc", "pde"), default="mc")
    sp.add_argument("--probe-lo", type=float, default=None)
    sp.add_argument("--probe-hi", type=float, default=None)
    sp.set_defaults(func=cmd_quantum)

    sp = sub.add_parser("limit", help="diffusive-limit distance table")
    _common(sp)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--lambdas", type=_float_list, default=[10.0, 100.0, 1000.0])
    sp.add_argument("--method", choices=("analytic", "pde"), default="analytic")
    sp.add_argument("--reference", action="store_true", help="append a Gaussian-vs-Gaussian row")
    sp.set_defaults(func=cmd_limit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridTooSmall as exc:
        print(f"grid error: {exc}", file=sys.stderr)
        return EXIT_GRID
    except DomainNotCovered as exc:
        print(f"coverage error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE


if __name__ == "__main__":
    sys.exit(main())
