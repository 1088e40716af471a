"""Experiment drivers: configuration files, checks, sweeps, scaling fits and
paired phase-field / sharp-interface comparisons.

Configuration files are flat ``key = value`` lists with dotted keys, e.g.::

    eps = 0.02
    sigma = 1
    regime = wiener
    geometry.kind = radial
    geometry.nr = 512
    noise.s = 2.5
    init.kind = bubble
    init.R0 = 0.5

See :data:`DEFAULTS` for every recognised key.
"""
from __future__ import annotations

import configparser
import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import linregress

from .diagnostics import (
    cosine_family,
    mass_balance_residual,
    surface_tension,
)
from .errors import ConfigError, DivergentTrace, NonPositiveValue, StochCHError
from .field_core import Field2D, Grid2D, RadialGrid, dct2, idct2, inv_laplacian, laplacian, radial_laplacian_values
from .hele_shaw import InterfaceConfig, evolve_deterministic, evolve_stochastic
from .noise import (
    QSpectrum,
    SmearKernel,
    WienerSource,
    noise_model,
    smeared_path,
    trace_report,
)
from .solver import (
    Radial,
    chemical_potential,
    SolverConfig,
    Square,
    initial_bubble_2d,
    initial_bubble_radial,
    initial_random,
    initial_strip_2d,
    run,
)

__all__ = [
    "DEFAULTS",
    "Check",
    "load_config",
    "parse_config",
    "solver_config",
    "initial_field",
    "FitResult",
    "fit_scaling",
    "SweepPlan",
    "SweepResult",
    "run_sweep",
    "profile_test",
    "noise_check",
    "RadialCompare",
    "radial_compare",
    "write_gnuplot",
]

DEFAULTS: dict[str, str] = {
    "eps": "0.05",
    "sigma": "1",
    "dt": "",
    "T": "0.1",
    "A": "2",
    "regime": "wiener",
    "gamma": "1",
    "seed": "0",
    "geometry.kind": "square",
    "geometry.n": "128",
    "geometry.d": "2",
    "geometry.nr": "512",
    "noise.s": "2.5",
    "noise.a0": "1",
    "noise.cutoff": "",
    "noise.gamma": "",
    "noise.seed": "",
    "observer.stride": "10",
    "out.path": "out",
    "init.kind": "bubble",
    "init.R0": "0.25",
    "init.x0": "0.5",
    "init.m0": "0",
    "init.amplitude": "0.05",
    "sweep.eps": "0.08,0.04,0.02",
    "sweep.sigma": "1",
    "sweep.seeds": "16",
    "compare.paths": "1",
    "workers": "1",
}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{tag}  {self.name}: {self.value:.4g} (threshold {self.threshold:.4g}){extra}"


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def parse_config(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` text into a dict merged over :data:`DEFAULTS`."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    flat = dict(DEFAULTS)
    for key, value in cp["run"].items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        flat[key] = value.strip()
    given = set(cp["run"])
    for alias, key in (("noise.seed", "seed"), ("noise.gamma", "gamma")):
        if alias in given:
            if key in given and flat[key] != flat[alias]:
                raise ConfigError(f"{alias} and {key} disagree")
            flat[key] = flat[alias]
    return flat


def load_config(path: str | os.PathLike | None) -> dict[str, str]:
    if path is None:
        return dict(DEFAULTS)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def config_value(flat: Mapping[str, str], key: str, kind=float):
    raw = flat.get(key, DEFAULTS[key])
    if raw == "":
        return None
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} = {raw!r} is not a valid {kind.__name__}") from exc


def _num_list(flat: Mapping[str, str], key: str, kind=float) -> list:
    raw = flat.get(key, DEFAULTS[key])
    try:
        return [kind(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key} = {raw!r} is not a list of numbers") from exc


def solver_config(flat: Mapping[str, str]) -> SolverConfig:
    kind = flat.get("geometry.kind", "square")
    if kind == "square":
        geometry = Square(config_value(flat, "geometry.n", int))
    elif kind == "radial":
        geometry = Radial(config_value(flat, "geometry.d", int), config_value(flat, "geometry.nr", int))
    else:
        raise ConfigError(f"geometry.kind must be square or radial, got {kind!r}")
    try:
        noise = QSpectrum(s=config_value(flat, "noise.s"), a0=config_value(flat, "noise.a0"),
                          cutoff=config_value(flat, "noise.cutoff", int))
        cfg = SolverConfig(
            eps=config_value(flat, "eps"),
            sigma=config_value(flat, "sigma"),
            dt=config_value(flat, "dt"),
            T=config_value(flat, "T"),
            A=config_value(flat, "A"),
            regime=flat.get("regime", "wiener"),
            gamma=config_value(flat, "gamma"),
            noise=noise,
            geometry=geometry,
            stride=config_value(flat, "observer.stride", int),
        )
        cfg.grid()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def initial_field(flat: Mapping[str, str], cfg: SolverConfig, seed: int = 0):
    grid = cfg.grid()
    kind = flat.get("init.kind", "bubble")
    try:
        if kind == "bubble":
            R0 = config_value(flat, "init.R0")
            if isinstance(grid, RadialGrid):
                return initial_bubble_radial(R0, cfg.eps, grid)
            return initial_bubble_2d(grid, R0, cfg.eps)
        if kind == "strip":
            if not isinstance(grid, Grid2D):
                raise ConfigError("init.kind = strip needs geometry.kind = square")
            return initial_strip_2d(grid, cfg.eps, config_value(flat, "init.x0"))
        if kind == "random":
            return initial_random(grid, config_value(flat, "init.m0"), config_value(flat, "init.amplitude"),
                                  np.random.default_rng([seed, 1]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"init.kind must be bubble, strip or random, got {kind!r}")


# --------------------------------------------------------------------------
# scaling fits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residuals: tuple
    r2: float


def fit_scaling(points: Sequence[tuple[float, float]]) -> FitResult:
    """Least-squares line through ``(log eps, log value)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (eps, value) points")
    if np.any(pts <= 0):
        raise NonPositiveValue("log-log fit needs positive eps and values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(x) == 0:
        raise ValueError("eps values must differ")
    fit = linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    r2 = 1.0 if len(x) == 2 else float(np.clip(fit.rvalue**2, 0.0, 1.0))
    return FitResult(float(fit.slope), float(fit.intercept), tuple(resid.tolist()), r2)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

SUMMARY_KEYS = ("sup_energy", "int_grad_v_sq", "sup_potential_mass", "int_discrepancy_abs")


def run_summary(flat: Mapping[str, str], seed: int) -> dict[str, float]:
    """One run reduced to the quantities tracked across eps."""
    cfg = solver_config(flat)
    u0 = initial_field(flat, cfg, seed)
    traj = run(u0, cfg, np.random.default_rng(seed))
    t = traj.column("t")
    return {
        "sup_energy": float(traj.column("energy").max()),
        "int_grad_v_sq": float(np.trapezoid(traj.column("grad_v_sq"), t)),
        "sup_potential_mass": float(traj.column("potential_mass").max()),
        "int_discrepancy_abs": float(np.trapezoid(traj.column("discrepancy_abs"), t)),
        "wall_time": traj.wall_time,
    }


@dataclass(frozen=True)
class SweepPlan:
    base: Mapping[str, str]
    eps: tuple
    sigma: tuple
    seeds: int
    stride: int
    out_dir: str | None = None

    def __post_init__(self):
        if len(self.eps) == 0:
            raise ConfigError("sweep needs at least one eps value")
        if any(e <= 0 for e in self.eps):
            raise ConfigError("sweep eps values must be positive")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigError("sweep eps values must be strictly decreasing")
        if len(self.sigma) == 0:
            raise ConfigError("sweep needs at least one sigma value")
        if self.seeds < 1:
            raise ConfigError("sweep needs at least one seed per cell")
        if self.stride < 1:
            raise ConfigError("observer stride must be >= 1")

    @classmethod
    def from_config(cls, flat: Mapping[str, str], out_dir: str | None = None) -> "SweepPlan":
        return cls(dict(flat), tuple(_num_list(flat, "sweep.eps")), tuple(_num_list(flat, "sweep.sigma")),
                   config_value(flat, "sweep.seeds", int), config_value(flat, "observer.stride", int), out_dir)

    def cells(self) -> list[tuple[float, float, int]]:
        base_seed = int(self.base.get("seed", "0") or 0)
        return [(e, s, base_seed + k) for s in self.sigma for e in self.eps for k in range(self.seeds)]

    def cell_config(self, eps: float, sigma: float) -> dict[str, str]:
        flat = dict(self.base)
        flat.update({"eps": repr(eps), "sigma": repr(sigma), "observer.stride": str(self.stride)})
        return flat


def _sweep_cell(args):
    flat, seed = args
    try:
        return run_summary(flat, seed)
    except StochCHError as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}


@dataclass
class SweepResult:
    plan: SweepPlan
    rows: list  # one dict per (eps, sigma, seed)
    means: dict  # (sigma, eps) -> {key: mean}
    fits: dict  # (sigma, key) -> FitResult

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cells = out / "cells.csv"
        with open(cells, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "sigma", "seed", *SUMMARY_KEYS, "error"])
            for r in self.rows:
                w.writerow([repr(r["eps"]), repr(r["sigma"]), r["seed"],
                            *[repr(r.get(k, math.nan)) for k in SUMMARY_KEYS], r.get("error", "")])
        means = out / "means.csv"
        with open(means, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sigma", "eps", "count", *SUMMARY_KEYS])
            for (s, e), m in sorted(self.means.items()):
                w.writerow([repr(s), repr(e), m["count"], *[repr(m[k]) for k in SUMMARY_KEYS]])
        fits = out / "fits.csv"
        with open(fits, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sigma", "quantity", "slope", "intercept", "r2"])
            for (s, k), f in sorted(self.fits.items()):
                w.writerow([repr(s), k, repr(f.slope), repr(f.intercept), repr(f.r2)])
        script = write_gnuplot(out / "means.gp", "means.csv", "eps",
                               {k: i + 4 for i, k in enumerate(SUMMARY_KEYS)}, logscale=True)
        return [cells, means, fits, script]


def _parallel_map(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_sweep(plan: SweepPlan, workers: int = 1) -> SweepResult:
    """Run every (eps, sigma, seed) cell; failed cells are recorded and skipped."""
    cells = plan.cells()
    jobs = [(plan.cell_config(e, s), seed) for e, s, seed in cells]
    results = _parallel_map(_sweep_cell, jobs, workers)
    rows = [{"eps": e, "sigma": s, "seed": seed, **res} for (e, s, seed), res in zip(cells, results)]
    means: dict = {}
    for s in plan.sigma:
        for e in plan.eps:
            ok = [r for r in rows if r["eps"] == e and r["sigma"] == s and "error" not in r]
            if ok:
                means[(s, e)] = {"count": len(ok), **{k: float(np.mean([r[k] for r in ok])) for k in SUMMARY_KEYS}}
    fits: dict = {}
    for s in plan.sigma:
        for k in SUMMARY_KEYS:
            pts = [(e, means[(s, e)][k]) for e in plan.eps if (s, e) in means]
            if len(pts) >= 2:
                try:
                    fits[(s, k)] = fit_scaling(pts)
                except NonPositiveValue:
                    pass
    return SweepResult(plan, rows, means, fits)


def write_gnuplot(path, data_file: str, xcol_name: str, columns: Mapping[str, int],
                  logscale: bool = False, xcol: int = 2) -> Path:
    """Plain-text gnuplot script plotting ``columns`` of a CSV against column ``xcol``."""
    lines = ["set datafile separator ','", f"set xlabel '{xcol_name}'", "set key left top"]
    if logscale:
        lines.append("set logscale xy")
    plots = [f"'{data_file}' using {xcol}:{col} skip 1 with linespoints title '{name}'"
             for name, col in columns.items()]
    lines.append("plot " + ", \\\n     ".join(plots))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


# --------------------------------------------------------------------------
# self checks
# --------------------------------------------------------------------------


def _max_energy_increase(traj) -> float:
    E = traj.column("energy")
    if not np.all(np.isfinite(E)):
        return math.inf
    return float(np.max(np.diff(E))) if len(E) > 1 else 0.0


def _guarded(name: str, threshold: float, fn: Callable[[], float], accept: Callable[[float], bool]) -> Check:
    try:
        value = fn()
    except (StochCHError, FloatingPointError) as exc:
        return Check(name, False, math.inf, threshold, f"{type(exc).__name__}: {exc}")
    return Check(name, bool(accept(value)), value, threshold)


def _energy_and_mass(cfg: SolverConfig, u0) -> tuple[float, float]:
    with np.errstate(all="ignore"):
        traj = run(u0, cfg, 0)
    m = traj.column("mass")
    mdrift = float(np.abs(m - m[0]).max()) if np.all(np.isfinite(m)) else math.inf
    return _max_energy_increase(traj), mdrift


def profile_test(A: float = 2.0, dt: float | None = None) -> list[Check]:
    """Deterministic invariants of the scheme, measured on small problems.

    ``A`` and ``dt`` override the stabilisation constant and the step used by
    the dissipation checks.
    """
    checks = []
    quiet = QSpectrum(a0=0.0)
    below = lambda tol: (lambda x: x <= tol)  # noqa: E731

    eps = 0.05
    strip_cfg = SolverConfig(eps=eps, T=0.1, A=A, geometry=Square(256), noise=quiet, stride=1000)
    strip = initial_strip_2d(strip_cfg.grid(), eps)

    def strip_drift():
        with np.errstate(all="ignore"):
            final = run(strip, strip_cfg, 0, diagnostics=False).final.u.values
        d = float(np.abs(final - strip.values).max())
        return d if math.isfinite(d) else math.inf

    checks.append(_guarded("tanh strip sup drift (eps=0.05, n=256, T=0.1)", 1e-3, strip_drift, below(1e-3)))
    checks.append(_guarded("tanh strip chemical potential sup", 1e-2,
                           lambda: float(np.abs(chemical_potential(strip, eps).values).max()), below(1e-2)))

    for label, cfg, u0_fn in (
        ("square bubble", SolverConfig(eps=0.05, T=0.02, dt=dt, A=A, geometry=Square(64), noise=quiet, stride=1),
         lambda g: initial_bubble_2d(g, 0.25, 0.05)),
        ("radial bubble", SolverConfig(eps=0.04, T=0.05, dt=dt, A=A, geometry=Radial(2, 256), noise=quiet, stride=1),
         lambda g: initial_bubble_radial(0.5, 0.04, g)),
    ):
        try:
            inc, mdrift = _energy_and_mass(cfg, u0_fn(cfg.grid()))
            checks.append(Check(f"energy non-increasing per step, {label}", inc <= 1e-10, inc, 1e-10))
            checks.append(Check(f"mass drift, {label}", mdrift <= 1e-10, mdrift, 1e-10))
        except StochCHError as exc:
            checks.append(Check(f"energy non-increasing per step, {label}", False, math.inf, 1e-10,
                                f"{type(exc).__name__}: {exc}"))

    wells_cfg = SolverConfig(eps=0.05, T=0.01, A=A, geometry=Square(32), noise=quiet, stride=100)

    def wells():
        return max(float(np.abs(run(Field2D.constant(wells_cfg.grid(), s), wells_cfg, 0,
                                    diagnostics=False).final.u.values - s).max()) for s in (-1.0, 1.0))

    checks.append(_guarded("wells are fixed points", 0.0, wells, lambda x: x == 0.0))
    checks.append(_guarded("time-step consistency order", 0.9, lambda: scheme_order(A), lambda x: x >= 0.9))
    return checks


def scheme_order(A: float = 2.0, T: float = 0.02) -> float:
    """Observed order from ``u(T)`` at three step sizes on a smooth deterministic run."""
    grid = Grid2D(32)
    X, Y = grid.mesh
    u0 = Field2D(grid, 0.2 + 0.5 * np.cos(np.pi * X) * np.cos(2 * np.pi * Y))
    finals = []
    for dt in (T / 160, T / 320, T / 640):
        cfg = SolverConfig(eps=0.1, T=T, dt=dt, A=A, geometry=Square(32), noise=QSpectrum(a0=0.0), stride=1000)
        finals.append(run(u0, cfg, 0, diagnostics=False).final.u.values)
    e1 = np.abs(finals[0] - finals[1]).max()
    e2 = np.abs(finals[1] - finals[2]).max()
    return float(np.log2(e1 / e2))


def noise_check(spectrum: QSpectrum, samples: int = 10_000, seed: int = 0,
                gammas: Sequence[float] = (0.5, 1.0, 2.0),
                eps_list: Sequence[float] = (0.2, 0.1, 0.05, 0.025)) -> tuple[list[Check], dict]:
    """Trace finiteness, sampled covariance and the smearing-convergence table."""
    checks = []
    info: dict = {}
    try:
        rep = trace_report(spectrum)
    except DivergentTrace as exc:
        checks.append(Check("trace of (-Lap) Q converges", False, math.inf, 0.25, str(exc)))
        return checks, info
    info["trace"] = rep
    checks.append(Check("trace of (-Lap) Q converges (relative change under cutoff doubling)",
                        rep.relative_change <= 0.25, rep.relative_change, 0.25,
                        f"Tr Q = {rep.trQ:.6g}, Tr(-Lap Q) = {rep.trNegLapQ:.6g}"))

    grid = Grid2D(32)
    model = noise_model(grid, spectrum)
    dt = 1.0
    rng = np.random.default_rng(seed)
    z = WienerSource(model.alpha, dt, rng).draw(samples)
    fields = model.synthesize(z)
    sq = np.sum(fields**2, axis=(1, 2)) * grid.h**2
    trQ = float(np.sum(model.alpha**2))
    cov_err = abs(sq.mean() / (trQ * dt) - 1.0)
    # the projections back onto the modes must have covariance diag(alpha^2) dt
    proj = model.project(fields)
    emp = proj.T @ proj / samples
    lead = np.argsort(model.alpha)[::-1][:4]
    target = np.diag(model.alpha**2 * dt)
    mode_err = float(np.abs(emp[np.ix_(lead, lead)] - target[np.ix_(lead, lead)]).max() / target[lead[0], lead[0]])
    info["covariance"] = {"trace_rel_err": cov_err, "leading_mode_rel_err": mode_err}
    checks.append(Check(f"E|dW|^2 / (Tr Q dt) - 1 over {samples} samples", cov_err <= 0.02, cov_err, 0.02,
                        f"leading-mode covariance deviation {mode_err:.3g}"))

    table = {}
    monotone = True
    for g in gammas:
        col = []
        for e in eps_list:
            path = smeared_path(1.0, SmearKernel(g), e, 1.0, 5e-5, seed)
            col.append(float(np.abs(path.smoothed() - path.wiener()).max()))
        table[g] = col
        monotone &= bool(np.all(np.diff(col) < 0))
    info["smearing"] = {"eps": list(eps_list), "sup_diff": table}
    worst = max(float(np.max(np.diff(c))) for c in table.values())
    checks.append(Check("sup|W^eps - W| decreasing in eps for every gamma", monotone, worst, 0.0))
    return checks, info


# --------------------------------------------------------------------------
# phase field versus sharp interface, radial
# --------------------------------------------------------------------------


@dataclass
class RadialCompare:
    times: np.ndarray
    R0: float
    spde: np.ndarray  # (paths, times)
    reference: np.ndarray  # (paths, times)
    gt_residual: np.ndarray  # (paths, times)
    stochastic_reference: bool
    psi_jump_max: float = 0.0

    def final_stats(self) -> dict:
        n = self.spde.shape[0]
        a, b = self.spde[:, -1], self.reference[:, -1]
        out = {
            "paths": n,
            "R0": self.R0,
            "mean_R_spde": float(a.mean()),
            "mean_R_ref": float(b.mean()),
            "max_rel_change_spde": float(np.max(np.abs(a - self.R0)) / self.R0),
            "sup_diff": float(np.nanmax(np.abs(self.spde - self.reference))),
        }
        if n > 1:
            va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
            out.update(var_spde=va, var_ref=vb,
                       se_var_spde=va * math.sqrt(2.0 / (n - 1)), se_var_ref=vb * math.sqrt(2.0 / (n - 1)))
        return out

    def variance_within_factor(self, factor: float = 2.0, nse: float = 2.0) -> bool:
        """Whether the final variances agree within ``factor`` allowing ``nse`` standard errors each."""
        s = self.final_stats()
        lo_a, hi_a = s["var_spde"] - nse * s["se_var_spde"], s["var_spde"] + nse * s["se_var_spde"]
        lo_b, hi_b = s["var_ref"] - nse * s["se_var_ref"], s["var_ref"] + nse * s["se_var_ref"]
        return lo_a <= factor * hi_b and hi_a >= lo_b / factor

    def write(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "t", "R_spde", "R_ref", "gt_residual"])
            for p in range(self.spde.shape[0]):
                for i, t in enumerate(self.times):
                    w.writerow([p, repr(float(t)), repr(float(self.spde[p, i])),
                                repr(float(self.reference[p, i])), repr(float(self.gt_residual[p, i]))])
        return path


def _first_radius(rec) -> float:
    return rec.interface_radii[0] if len(rec.interface_radii) == 1 else math.nan


def _compare_path(args):
    cfg, R0, seed, stochastic = args
    grid = cfg.grid()
    u0 = initial_bubble_radial(R0, cfg.eps, grid)
    traj = run(u0, cfg, np.random.default_rng(seed), keep_states=stochastic)
    spde = np.array([_first_radius(r) for r in traj.records])
    gt = np.array([r.gt_residual for r in traj.records])
    times = traj.column("t")
    hs_cfg = InterfaceConfig(grid.d, (R0,), 1)
    psi_max = 0.0
    if stochastic:
        # same realisation: Wiener increments underlying the smeared forcing
        hs = evolve_stochastic(hs_cfg, grid, cfg.noise, cfg.T, cfg.stride * cfg.time_step,
                               increments=traj.wiener, amplitude=cfg.amplitude)
        ref = hs.radii[:, 0]
        psi_max = float(np.abs(hs.psi_jumps).max()) if hs.psi_jumps.size else 0.0
    else:
        hs = evolve_deterministic(hs_cfg, cfg.T, cfg.stride * cfg.time_step)
        ref = hs.radii[:, 0]
    n = min(len(ref), len(spde))
    return times[:n], spde[:n], ref[:n], gt[:n], psi_max


def radial_compare(cfg: SolverConfig, R0: float = 0.5, paths: int = 1, seed: int = 0,
                   workers: int = 1) -> RadialCompare:
    """Paired radial phase-field runs and their sharp-interface reference.

    Small-noise regimes (Wiener with ``sigma >= 1/2``, smeared with
    ``sigma > 0``) are compared with the deterministic interface law.  The
    smeared regime with ``sigma = 0`` is compared with the stochastic law
    driven by the Wiener increments underneath the same smeared forcing.
    """
    if not isinstance(cfg.geometry, Radial):
        raise ConfigError("radial-compare needs geometry.kind = radial")
    stochastic = cfg.regime == "smeared" and cfg.sigma == 0 and cfg.noisy
    if stochastic and cfg.steps % cfg.stride:
        raise ConfigError("observer.stride must divide the number of steps for paired stochastic runs")
    jobs = [(cfg, R0, seed + p, stochastic) for p in range(paths)]
    res = _parallel_map(_compare_path, jobs, workers)
    n = min(len(r[0]) for r in res)
    return RadialCompare(
        times=res[0][0][:n],
        R0=R0,
        spde=np.array([r[1][:n] for r in res]),
        reference=np.array([r[2][:n] for r in res]),
        gt_residual=np.array([r[3][:n] for r in res]),
        stochastic_reference=stochastic,
        psi_jump_max=max(r[4] for r in res),
    )


def mass_balance_study(eps: float = 0.04, T: float = 0.05, levels=((128, 2e-4), (256, 1e-4), (512, 5e-5)),
                       seeds: Sequence[int] = (0, 1, 2, 3), kmax: int = 3) -> np.ndarray:
    """Seed-averaged weak mass-balance residuals for the smeared ``sigma = 0`` regime.

    Returns an array ``(levels, kmax)``; rows refine ``h`` and ``dt`` together.
    """
    out = []
    for nr, dt in levels:
        cfg = SolverConfig(eps=eps, sigma=0.0, regime="smeared", T=T, dt=dt,
                           geometry=Radial(2, nr), stride=1)
        u0 = initial_bubble_radial(0.5, eps, cfg.grid())
        res = [mass_balance_residual(run(u0, cfg, s, keep_states=True, diagnostics=False),
                                     cosine_family(T, kmax)) for s in seeds]
        out.append(np.mean(res, axis=0))
    return np.array(out)


def structure_checks() -> list[Check]:
    """Transform round trip, Neumann inverse and radial stencil order."""
    checks = []
    grid = Grid2D(64)
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((64, 64))
    rt = float(np.abs(idct2(dct2(vals, grid), grid) - vals).max())
    checks.append(Check("cosine transform round trip", rt <= 1e-12, rt, 1e-12))
    f = Field2D(grid, vals)
    back = inv_laplacian(laplacian(f)).values
    inv = float(np.abs(back - (vals - vals.mean())).max())
    checks.append(Check("inverse Laplacian of Laplacian = identity - mean", inv <= 1e-10, inv, 1e-10))
    for d in (2, 3):
        errs = []
        sizes = (64, 128, 256)
        for nr in sizes:
            g = RadialGrid(d, nr)
            exact = -np.pi**2 * np.cos(np.pi * g.r) - (d - 1) * np.pi * _sinc_term(g.r)
            lap = radial_laplacian_values(np.cos(np.pi * g.r), g)
            errs.append(np.abs(lap - exact).max())
        order = float(np.log2(errs[-2] / errs[-1]))
        checks.append(Check(f"radial Laplacian observed order, d={d}", order >= 1.8, order, 1.8))
    return checks


def _sinc_term(r):
    """``sin(pi r) / r`` with its limit ``pi`` at the origin."""
    out = np.full_like(r, np.pi)
    nz = r > 0
    out[nz] = np.sin(np.pi * r[nz]) / r[nz]
    return out


def constants_checks() -> list[Check]:
    c = surface_tension()
    err = abs(c.S - math.sqrt(2.0) / 3.0)
    return [
        Check("S by quadrature equals sqrt(2)/3", err <= 1e-10, err, 1e-10),
        Check("G(1) equals 2S", abs(c.twoS - 2 * c.S) <= 1e-10, abs(c.twoS - 2 * c.S), 1e-10),
    ]


__all__ += ["run_summary", "scheme_order", "mass_balance_study", "structure_checks", "constants_checks",
            "SUMMARY_KEYS"]
