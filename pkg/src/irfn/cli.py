"""Command-line runner: ``irfn <mode> --config <file> [--out <dir>] [--workers n] [--seed s]``.

Config files are YAML.  Keys:

    spec: {...}            inline ModelSpec (same schema as ``save_spec``)
    spec_file: path        or a ModelSpec file, relative to the config
    seed: int              required by simulate, compare, calibrate (synthetic) and sweep
    N: [int, ...]          network sizes for simulate / compare
    trials: int            Monte Carlo trials per size
    steps: int             cascade steps reported individually (default 5)
    lambda: float          overrides the model's recovery parameter
    tol: float             equilibrium tolerance for the analytic solver
    grid: {delta, L}       analytic grid (chosen automatically when absent)
    kernel_options: {h, max_points, tail_mass, tail_tol, a_cap}   kernel discretization
    kernel_file: path      reuse a saved shock kernel (analytic / compare)
    trigger: {kind, target, values, dists}   optional crisis trigger for simulations
    gw: {orientation: out|in}
    calibrate: {panel_dir: path} or {synthetic: {n_banks, months, threshold}}
    sweep: {parameter: lambda|kappa_scale|gw_mean, values: [...], mode: analytic|simulate|gw}

Every CSV starts with ``# config_hash`` and ``# version`` comment lines, and a
``manifest.yaml`` records hashes, versions and wall time.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np
import scipy
import yaml

from . import __version__
from .analytic.cascade import run_analytic
from .analytic.grid import Grid, auto_grid
from .analytic.kernel import KernelOptions, ShockKernel, build_shock_kernel
from .calibration import calibrate, generate_synthetic_panel, load_panel, save_panel
from .distributions import DistributionFamily
from .gw import OffspringLaw, extinction_probability
from .model import ModelSpec, save_spec, validate_spec
from .montecarlo import monte_carlo
from .network import Trigger

log = logging.getLogger("irfn")

MODES = ("simulate", "analytic", "compare", "gw", "calibrate", "sweep")
STOCHASTIC = ("simulate", "compare", "sweep")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- config


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    cfg["_base"] = str(path.parent.resolve())
    return cfg


def resolve_spec(cfg: dict[str, Any]) -> ModelSpec:
    if "spec" in cfg:
        spec = ModelSpec.from_dict(cfg["spec"])
    elif "spec_file" in cfg:
        with open(Path(cfg["_base"]) / cfg["spec_file"]) as fh:
            spec = ModelSpec.from_dict(yaml.safe_load(fh))
    else:
        raise ConfigError("config needs 'spec' or 'spec_file'")
    if "lambda" in cfg:
        spec = spec.replace(recovery_lambda=float(cfg["lambda"]))
    violations = validate_spec(spec)
    if violations:
        raise ConfigError("; ".join(f"{v.code}: {v.message}" for v in violations))
    return spec


def validate_config(mode: str, cfg: dict[str, Any]) -> None:
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    needs_seed = mode in STOCHASTIC or (mode == "calibrate" and "synthetic" in cfg.get("calibrate", {}))
    if needs_seed and cfg.get("seed") is None:
        raise ConfigError(f"mode {mode} is stochastic and needs a seed")
    if mode in ("simulate", "compare") or (mode == "sweep" and cfg.get("sweep", {}).get("mode") == "simulate"):
        trials = cfg.get("trials")
        if not isinstance(trials, int) or trials < 1:
            raise ConfigError("trials must be a positive integer")
        sizes = cfg.get("N")
        if not sizes or any(not isinstance(n, int) or n < 2 for n in np.atleast_1d(sizes).tolist()):
            raise ConfigError("N must list network sizes of at least 2")
    if mode == "sweep":
        sw = cfg.get("sweep")
        if not sw or "parameter" not in sw or not sw.get("values"):
            raise ConfigError("sweep needs 'parameter' and 'values'")
        if sw["parameter"] not in ("lambda", "kappa_scale", "gw_mean"):
            raise ConfigError(f"unknown sweep parameter {sw['parameter']!r}")
    if mode == "calibrate" and not cfg.get("calibrate"):
        raise ConfigError("calibrate mode needs a 'calibrate' section")


def config_hash(cfg: dict[str, Any]) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    blob = json.dumps(clean, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------------- output


class Reporter:
    """Single writer for all report files of one run."""

    def __init__(self, out: Path, chash: str):
        self.out = out
        self.chash = chash
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows: list[list[Any]]) -> Path:
        buf = io.StringIO()
        buf.write(f"# config_hash: {self.chash}\n# version: irfn {__version__}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
        path = self.out / name
        path.write_text(buf.getvalue())
        self.files.append(name)
        return path

    def manifest(self, mode: str, wall: float, extra: dict[str, Any]) -> None:
        data = {
            "mode": mode,
            "config_hash": self.chash,
            "irfn_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "wall_time_seconds": round(wall, 3),
            "outputs": self.files,
            **extra,
        }
        with open(self.out / "manifest.yaml", "w") as fh:
            yaml.safe_dump(data, fh, sort_keys=False)


def _fmt(x: Any) -> Any:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


# --------------------------------------------------------------------------- modes


def _trigger(cfg: dict[str, Any]) -> Trigger | None:
    t = cfg.get("trigger")
    if not t:
        return None
    dists = tuple(DistributionFamily.from_dict(d) for d in t.get("dists", ()))
    return Trigger(
        t["kind"], t.get("target", "Delta"), tuple(float(v) for v in t.get("values", ())), dists, seed=int(cfg["seed"])
    )


def _sizes(cfg: dict[str, Any]) -> list[int]:
    return [int(n) for n in np.atleast_1d(cfg["N"]).tolist()]


def _simulate_rows(spec: ModelSpec, cfg: dict[str, Any], workers: int):
    steps = int(cfg.get("steps", 5))
    summaries = []
    for n in _sizes(cfg):
        spec.check(n)
        summaries.append(
            monte_carlo(spec, n, int(cfg["trials"]), int(cfg["seed"]), steps, workers, trigger=_trigger(cfg))
        )
    return summaries, steps


def mode_simulate(spec, cfg, rep: Reporter, workers: int) -> dict[str, Any]:
    summaries, steps = _simulate_rows(spec, cfg, workers)
    rows = []
    for s in summaries:
        for step in range(steps + 1):
            for t in range(spec.num_types):
                rows.append([s.n, step, t + 1, s.step_mean_by_type[step, t], "", "", ""])
            m, se = s.step_mean[step], s.step_stderr[step]
            rows.append([s.n, step, "all", m, se, m - 1.96 * se, m + 1.96 * se])
        m, se = s.equilibrium_mean, s.equilibrium_stderr
        for t in range(spec.num_types):
            rows.append([s.n, "equilibrium", t + 1, s.equilibrium_by_type[t], "", "", ""])
        rows.append([s.n, "equilibrium", "all", m, se, m - 1.96 * se, m + 1.96 * se])
    rep.csv("simulate.csv", ["N", "step", "type", "default_fraction", "stderr", "ci95_low", "ci95_high"], rows)
    trial_rows = [
        [s.n, i, r.cascade_steps, r.equilibrium] for s in summaries for i, r in enumerate(s.results)
    ]
    rep.csv("simulate_trials.csv", ["N", "trial", "cascade_steps", "equilibrium_default_fraction"], trial_rows)
    return {"equilibrium_default_fraction": {s.n: s.equilibrium_mean for s in summaries}}


def _kernel(spec: ModelSpec, cfg: dict[str, Any]) -> ShockKernel | None:
    if cfg.get("kernel_file"):
        kernel = ShockKernel.load(Path(cfg["_base"]) / cfg["kernel_file"])
        if abs(kernel.lam - spec.recovery_lambda) > 0 or kernel.num_types != spec.num_types:
            raise ConfigError("saved kernel does not match the model (lambda or number of types)")
        return kernel
    if cfg.get("grid"):
        g = cfg["grid"]
        return build_shock_kernel(spec, Grid(float(g["delta"]), int(g["L"])), opts=_kernel_options(cfg))
    return None


def _kernel_options(cfg: dict[str, Any]) -> KernelOptions:
    extra = cfg.get("kernel_options") or {}
    unknown = set(extra) - {"h", "max_points", "tail_mass", "tail_tol", "a_cap"}
    if unknown:
        raise ConfigError(f"unknown kernel_options keys {sorted(unknown)}")
    return KernelOptions(**{k: (int(v) if k == "max_points" else float(v)) for k, v in extra.items()})


def mode_analytic(spec, cfg, rep: Reporter, workers: int, save_kernel: bool = True):
    kernel = _kernel(spec, cfg)
    fresh = not cfg.get("kernel_file")
    if kernel is None:
        kernel = build_shock_kernel(spec, auto_grid(spec), opts=_kernel_options(cfg))
    report = run_analytic(spec, kernel=kernel, steps=int(cfg.get("steps", 5)), tol=float(cfg.get("tol", 1e-10)))
    eq = report.equilibrium
    rows = []
    for t in range(spec.num_types):
        rows.append([t + 1] + [p[t] for p in report.step_probs] + [report.equilibrium_probs[t], eq.residual, eq.iterations])
    rows.append(["all"] + [report.blended(p) for p in report.step_probs] + [report.blended(report.equilibrium_probs), eq.residual, eq.iterations])
    header = ["type"] + [f"default_probability_step_{n}" for n in range(len(report.step_probs))]
    header += ["default_probability_equilibrium", "residual", "iterations"]
    rep.csv("analytic.csv", header, rows)
    if save_kernel and fresh:
        kernel.save(rep.out / "kernel.npz")
        rep.files.append("kernel.npz")
    return report, {"grid": {"delta": report.grid.delta, "L": report.grid.L}}


def mode_compare(spec, cfg, rep: Reporter, workers: int):
    report, extra = mode_analytic(spec, cfg, rep, workers, save_kernel=False)
    summaries, steps = _simulate_rows(spec, cfg, workers)
    rows = []
    for s in summaries:
        for step in range(1, min(steps, len(report.step_probs) - 1) + 1):
            a = report.blended(report.step_probs[step])
            rows.append([f"default_probability_step_{step}", s.n, a, s.step_mean[step], s.step_stderr[step], abs(a - s.step_mean[step])])
        a = report.blended(report.equilibrium_probs)
        rows.append(["default_probability_equilibrium", s.n, a, s.equilibrium_mean, s.equilibrium_stderr, abs(a - s.equilibrium_mean)])
    rep.csv("compare.csv", ["quantity", "N", "analytic", "monte_carlo", "mc_stderr", "gap"], rows)
    extra["max_gap"] = float(max(r[-1] for r in rows))
    return extra


def _gw_rows(spec: ModelSpec, cfg: dict[str, Any], label: Any) -> list[Any]:
    orientation = cfg.get("gw", {}).get("orientation", "out")
    res = extinction_probability(OffspringLaw.from_spec(spec, orientation))
    return [label] + list(res.xi) + [res.critical_eigenvalue, res.critical, res.iterations]


def mode_gw(spec, cfg, rep: Reporter, workers: int):
    row = _gw_rows(spec, cfg, "spec")
    header = ["parameter"] + [f"xi_{t + 1}" for t in range(spec.num_types)] + ["critical_eigenvalue", "critical", "iterations"]
    rep.csv("gw.csv", header, [row])
    return {"xi": [float(x) for x in row[1 : 1 + spec.num_types]], "critical_eigenvalue": float(row[1 + spec.num_types])}


def mode_calibrate(cfg, rep: Reporter) -> dict[str, Any]:
    section = cfg["calibrate"]
    lam = float(section.get("lambda", cfg.get("lambda", 1.0)))
    if "panel_dir" in section:
        panel = load_panel(Path(cfg["_base"]) / section["panel_dir"], threshold=float(section.get("threshold", 0.0)))
    else:
        syn = section["synthetic"]
        spec = resolve_spec(cfg)
        panel = generate_synthetic_panel(
            spec, int(syn["n_banks"]), int(syn["months"]), float(syn.get("threshold", 0.0)), int(cfg["seed"])
        )
        save_panel(panel, rep.out / "panel")
        rep.files += ["panel/banks.csv", "panel/exposures.csv", "panel/balances.csv"]
    result = calibrate(panel, lam)
    save_spec(result.spec, rep.out / "calibrated_spec.yaml")
    rep.files.append("calibrated_spec.yaml")
    m = panel.num_types
    rows = [["type_prob", t + 1, "", result.spec.type_probs[t], ""] for t in range(m)]
    for t in range(m):
        for t2 in range(m):
            rows.append(["kernel_raw", t + 1, t2 + 1, result.kernel_raw[t, t2], ""])
            rows.append(["kernel_corrected", t + 1, t2 + 1, result.spec.kernel[t, t2], result.kernel_stderr[t, t2]])
            pooled = (t, t2) in result.pooled_pairs
            rows.append(["exposure_law", t + 1, t2 + 1, "pooled" if pooled else "pair", ""])
    rep.csv("calibration.csv", ["quantity", "type", "type2", "estimate", "stderr"], rows)
    return {"pooled_pairs": [[a + 1, b + 1] for a, b in result.pooled_pairs]}


def mode_sweep(spec, cfg, rep: Reporter, workers: int) -> dict[str, Any]:
    sw = cfg["sweep"]
    param, sub = sw["parameter"], sw.get("mode", "gw" if sw["parameter"] == "gw_mean" else "analytic")
    rows = []
    for value in sw["values"]:
        value = float(value)
        if param == "lambda":
            s = spec.replace(recovery_lambda=value)
        elif param == "kappa_scale":
            s = spec.replace(kernel=spec.kernel * value)
        else:
            # rescale the kernel so the mean offspring matrix has the requested spectral radius
            rho = OffspringLaw.from_spec(spec).means
            s = spec.replace(kernel=spec.kernel * value / max(np.max(np.abs(np.linalg.eigvals(rho))), 1e-300))
        if sub == "gw":
            rows.append(_gw_rows(s, cfg, value))
        elif sub == "analytic":
            grid = Grid(float(cfg["grid"]["delta"]), int(cfg["grid"]["L"])) if cfg.get("grid") else None
            report = run_analytic(
                s, grid=grid, steps=int(cfg.get("steps", 5)), tol=float(cfg.get("tol", 1e-10)), opts=_kernel_options(cfg)
            )
            rows.append([value, report.blended(report.step_probs[1]), report.blended(report.equilibrium_probs), report.equilibrium.iterations])
        elif sub == "simulate":
            summaries, _ = _simulate_rows(s, cfg, workers)
            for summ in summaries:
                rows.append([value, summ.n, summ.step_mean[1], summ.equilibrium_mean, summ.equilibrium_stderr])
        else:
            raise ConfigError(f"unknown sweep mode {sub!r}")
    if sub == "gw":
        header = [param] + [f"xi_{t + 1}" for t in range(spec.num_types)] + ["critical_eigenvalue", "critical", "iterations"]
    elif sub == "analytic":
        header = [param, "default_probability_step_1", "default_probability_equilibrium", "iterations"]
    else:
        header = [param, "N", "default_fraction_step_1", "default_fraction_equilibrium", "stderr"]
    rep.csv("sweep.csv", header, rows)
    return {"points": len(rows)}


# --------------------------------------------------------------------------- entry point


def run(mode: str, cfg: dict[str, Any], out: Path, workers: int = 1) -> int:
    """Run one mode; returns the process exit status."""
    start = time.perf_counter()
    validate_config(mode, cfg)
    rep = Reporter(out, config_hash({**cfg, "mode": mode}))
    if mode == "calibrate":
        extra = mode_calibrate(cfg, rep)
    else:
        spec = resolve_spec(cfg)
        if mode == "simulate":
            extra = mode_simulate(spec, cfg, rep, workers)
        elif mode == "analytic":
            _, extra = mode_analytic(spec, cfg, rep, workers)
        elif mode == "compare":
            extra = mode_compare(spec, cfg, rep, workers)
        elif mode == "gw":
            extra = mode_gw(spec, cfg, rep, workers)
        else:
            extra = mode_sweep(spec, cfg, rep, workers)
    rep.manifest(mode, time.perf_counter() - start, extra)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irfn", description="Inhomogeneous random financial network experiments")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--out", default="irfn_out", help="output directory (default: irfn_out)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo trials")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        return run(args.mode, cfg, out, args.workers)
    except Exception as exc:  # every failure becomes a structured report
        code = 2 if isinstance(exc, (ConfigError, OSError, yaml.YAMLError, KeyError)) else 1
        report = {"status": "error", "mode": args.mode, "error": type(exc).__name__, "message": str(exc)}
        try:
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "error.yaml", "w") as fh:
                yaml.safe_dump(report, fh, sort_keys=False)
        except OSError:
            pass
        print(json.dumps(report), file=sys.stderr)
        log.debug("failure", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
