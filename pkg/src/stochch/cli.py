"""Command line entry point: ``stochch <subcommand> [--config FILE] ...``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on a
configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .diagnostics import constants_report
from .errors import ConfigError, NonPositiveValue, StochCHError
from .experiments import (
    Check,
    SweepPlan,
    fit_scaling,
    initial_field,
    load_config,
    noise_check,
    profile_test,
    radial_compare,
    run_sweep,
    solver_config,
    write_gnuplot,
    config_value,
)
from .noise import QSpectrum
from .solver import run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _emit(args, checks: list[Check], info: dict | None = None, lines: list[str] | None = None) -> int:
    ok = all(c.passed for c in checks)
    if args.json:
        payload = {
            "command": args.command,
            "passed": ok,
            "checks": [dict(name=c.name, passed=c.passed, value=c.value, threshold=c.threshold, detail=c.detail)
                       for c in checks],
            "info": info or {},
        }
        print(json.dumps(_jsonable(payload), indent=2))
    else:
        for line in lines or []:
            print(line)
        for c in checks:
            print(c.line())
    return EXIT_OK if ok else EXIT_FAIL


def _config(args) -> dict[str, str]:
    flat = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        flat["seed"] = str(args.seed)
    if getattr(args, "workers", None) is not None:
        flat["workers"] = str(args.workers)
    return flat


def _out_dir(args, flat) -> Path:
    out = Path(args.out if args.out is not None else flat["out.path"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_profile_test(args) -> int:
    flat = _config(args)
    A = config_value(flat, "A")
    dt = config_value(flat, "dt")
    return _emit(args, profile_test(A=A, dt=dt), {"A": A, "dt": dt})


def cmd_simulate(args) -> int:
    flat = _config(args)
    cfg = solver_config(flat)
    seed = config_value(flat, "seed", int)
    u0 = initial_field(flat, cfg, seed)
    traj = run(u0, cfg, np.random.default_rng(seed))
    out = _out_dir(args, flat)
    csv_path = out / "trajectory.csv"
    traj.to_csv(csv_path)
    (out / "constants.txt").write_text(constants_report() + "\n")
    write_gnuplot(out / "trajectory.gp", "trajectory.csv", "t",
                  {"energy": 2, "potential_mass": 3, "discrepancy_abs": 4, "perimeter": 6}, xcol=1)
    m = traj.column("mass")
    drift = float(np.abs(m - m[0]).max())
    checks = [Check("mass drift", drift <= 1e-10, drift, 1e-10)]
    info = {"steps": cfg.steps, "dt": cfg.time_step, "records": len(traj.records),
            "wall_time_s": traj.wall_time, "csv": str(csv_path),
            "final_energy": traj.records[-1].energy}
    lines = [f"wrote {csv_path} ({len(traj.records)} records, {cfg.steps} steps, {traj.wall_time:.2f} s)",
             constants_report()]
    return _emit(args, checks, info, lines)


def cmd_sweep(args) -> int:
    flat = _config(args)
    plan = SweepPlan.from_config(flat)
    solver_config(plan.cell_config(plan.eps[0], plan.sigma[0]))  # validate before launching
    res = run_sweep(plan, workers=config_value(flat, "workers", int))
    out = _out_dir(args, flat)
    files = res.write(out)
    failed = [r for r in res.rows if "error" in r]
    checks = [Check("sweep cells completed", not failed, float(len(failed)), 0.0,
                    "; ".join(r["error"] for r in failed[:3]))]
    lines = [f"wrote {', '.join(str(f) for f in files)}"]
    for (s, k), f in sorted(res.fits.items()):
        lines.append(f"sigma={s:g} {k}: slope {f.slope:.4f}, R^2 {f.r2:.4f}")
    info = {"fits": {f"{s}:{k}": vars(f) for (s, k), f in res.fits.items()},
            "means": {f"{s}:{e}": m for (s, e), m in res.means.items()}}
    return _emit(args, checks, info, lines)


def cmd_radial_compare(args) -> int:
    flat = _config(args)
    cfg = solver_config(flat)
    paths = config_value(flat, "compare.paths", int)
    res = radial_compare(cfg, R0=config_value(flat, "init.R0"), paths=paths, seed=config_value(flat, "seed", int),
                         workers=config_value(flat, "workers", int))
    out = _out_dir(args, flat)
    csv_path = res.write(out / "radial_compare.csv")
    stats = res.final_stats()
    checks = []
    if res.stochastic_reference:
        if paths > 1:
            checks.append(Check("Var R_spde(T) within factor 2 of Var R_ref(T) (2 s.e.)",
                                res.variance_within_factor(), stats["var_spde"] / max(stats["var_ref"], 1e-300), 2.0,
                                f"var_spde={stats['var_spde']:.3e}, var_ref={stats['var_ref']:.3e}"))
    else:
        rel = stats["max_rel_change_spde"]
        checks.append(Check("|R_spde(T) - R0| / R0", rel <= 0.05, rel, 0.05))
    lines = [f"wrote {csv_path}", f"sup |R_spde - R_ref| = {stats['sup_diff']:.4g}"]
    return _emit(args, checks, {**stats, "csv": str(csv_path)}, lines)


def cmd_noise_check(args) -> int:
    flat = _config(args)
    spectrum = QSpectrum(s=config_value(flat, "noise.s"), a0=config_value(flat, "noise.a0"), cutoff=config_value(flat, "noise.cutoff", int))
    checks, info = noise_check(spectrum, seed=config_value(flat, "seed", int))
    lines = []
    if "smearing" in info:
        eps = info["smearing"]["eps"]
        lines.append("sup|W^eps - W| by gamma (columns) and eps (rows)")
        table = info["smearing"]["sup_diff"]
        lines.append("eps      " + "  ".join(f"gamma={g:<6g}" for g in table))
        for i, e in enumerate(eps):
            lines.append(f"{e:<8g} " + "  ".join(f"{table[g][i]:<12.5f}" for g in table))
    if "trace" in info:
        info["trace"] = vars(info["trace"])
    return _emit(args, checks, info, lines)


def _read_points(args) -> list[tuple[float, float]]:
    pts = []
    if args.points:
        for item in args.points.split(","):
            try:
                e, v = item.split(":")
                pts.append((float(e), float(v)))
            except ValueError as exc:
                raise ConfigError(f"bad point {item!r}; expected eps:value") from exc
    if args.csv:
        try:
            data = np.loadtxt(args.csv, delimiter=",", skiprows=1, usecols=(args.xcol, args.ycol), ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read points from {args.csv}: {exc}") from exc
        pts.extend(map(tuple, data.tolist()))
    if len(pts) < 2:
        raise ConfigError("fit needs at least two points")
    return pts


def cmd_fit(args) -> int:
    try:
        fit = fit_scaling(_read_points(args))
    except NonPositiveValue as exc:
        raise ConfigError(str(exc)) from exc
    info = vars(fit)
    lines = [f"slope {fit.slope:.6f}  intercept {fit.intercept:.6f}  R^2 {fit.r2:.6f}"]
    checks = []
    if args.min_slope is not None:
        checks.append(Check("fitted slope", fit.slope >= args.min_slope, fit.slope, args.min_slope))
    return _emit(args, checks, info, lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochch", description="Stochastic Cahn-Hilliard experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, out=True, workers=False):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--json", action="store_true", help="machine-readable report")
        if seed:
            sp.add_argument("--seed", type=int, help="override the config seed")
        if out:
            sp.add_argument("--out", help="output directory (default: out.path)")
        if workers:
            sp.add_argument("--workers", type=int, help="parallel worker processes")
        return sp

    common(sub.add_parser("profile-test", help="deterministic scheme invariants"), seed=False, out=False)
    common(sub.add_parser("simulate", help="single run to CSV"))
    common(sub.add_parser("sweep", help="eps/sigma sweep with scaling fits"), workers=True)
    common(sub.add_parser("radial-compare", help="phase field vs sharp interface, radial"), workers=True)
    common(sub.add_parser("noise-check", help="noise spectrum and smearing checks"), out=False)
    fp = common(sub.add_parser("fit", help="log-log fit of (eps, value) points"), seed=False, out=False)
    fp.add_argument("--points", help="comma list of eps:value pairs")
    fp.add_argument("--csv", help="CSV file with a header row")
    fp.add_argument("--xcol", type=int, default=0)
    fp.add_argument("--ycol", type=int, default=1)
    fp.add_argument("--min-slope", type=float, help="fail unless the slope reaches this value")
    return p


COMMANDS = {
    "profile-test": cmd_profile_test,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "radial-compare": cmd_radial_compare,
    "noise-check": cmd_noise_check,
    "fit": cmd_fit,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StochCHError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
