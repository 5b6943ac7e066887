"""Batch entry point: `couettelab <subcommand> [--config ...] [--out ...]`.

Subcommands
-----------
kernel-eval     kernel and derivative values on a user grid
                -> kernel_eval.csv: nu,tau,x,y,y_prime,derivative,value
kernel-norms    quadrature vs closed-form slice norms
                -> kernel_norms.csv: p,nu,tau,slice,derivative,quadrature,closed_form,envelope
verify          full lemma-envelope verification; exit 1 on any violation
                -> lemma_<id>.csv: lemma,p,nu,tau,slice,derivative,measured,envelope,ratio
                -> verify_summary.txt (+ failures.txt on violation)
linear-demo     linear decay fits in both time conventions, heat control
                -> decay_fits.csv: nu,sigma,control,time_scale,window_lo,window_hi,alpha,residual
                -> trajectory_{shear,heat}.csv: t,l2,linf,u_l2,enstrophy_flux
simulate        one nonlinear (or linear) run
                -> trajectory.csv: t,l2,linf,u_l2,enstrophy_flux
                -> run_summary.yaml (+ snapshots/*.bin when requested)
threshold-scan  amplitude bisection over (nu, c)
                -> threshold.csv: nu,stable,unstable,eps_star,censored
                -> scan_long.dat (gnuplot long format), scan_summary.yaml
                cells/<nu>_<c>.yaml cache makes interrupted scans resumable

Conventions: configs are YAML (nested key-value), unknown keys are rejected,
and the fully resolved config (defaults included) is echoed to
<out>/config_resolved.yaml for provenance. All randomness flows from one
64-bit seed (--seed overrides the config). Failures leave <out>/FAILED with
the reason; outputs are written to temporaries and renamed, so a table is
either complete or absent. Identical config + seed gives byte-identical
output trees. COUETTELAB_OUTPUT_ROOT, when set, prefixes relative --out
paths.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import (
    ThresholdScanResult,
    calibrate_delta,
    decay_fit,
    fit_gamma,
    scan_single_nu,
    threshold_scan,
    weighted_sup,
)
from .kernel import KernelParams, eval_green, eval_green_grad
from .norms import (
    NormQuery,
    envelope_tau_slope,
    kernel_lp_closed_form,
    kernel_lp_quadrature,
    lemma_envelope,
    verify_lemma_bounds,
)
from .solver import SimConfig, Trajectory, linear_reference_trajectory, simulate
from .spectral import GridSpec, save_snapshot

OUTPUT_ROOT_ENV = "COUETTELAB_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_atomic(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _resolve_out(out: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    p = Path(out)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _merge_config(defaults: dict, user: dict, context="config") -> dict:
    """Defaults overlaid by user values; unknown keys rejected, nesting merged."""
    out = {}
    for key, dval in defaults.items():
        if key in user:
            uval = user[key]
            if isinstance(dval, dict):
                if not isinstance(uval, dict):
                    raise ConfigError(f"{context}.{key} must be a mapping")
                out[key] = _merge_config(dval, uval, f"{context}.{key}")
            else:
                out[key] = uval
        else:
            out[key] = dval
    unknown = set(user) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")
    return out


def load_config(defaults: dict, path: str | None) -> dict:
    user = {}
    if path:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a mapping")
    return _merge_config(defaults, user)


def _echo_config(outdir: Path, cfg: dict):
    write_atomic(outdir / "config_resolved.yaml",
                 yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False))


def _grid_from(cfg: dict) -> GridSpec:
    return GridSpec(int(cfg["n_x"]), int(cfg["n_y"]), float(cfg["half_length"]))


def _sim_config(sim: dict, seed: int) -> SimConfig:
    return SimConfig(
        nu=float(sim["nu"]),
        grid=_grid_from(sim),
        t_end=float(sim["t_end"]),
        dt=float(sim["dt"]),
        eps=float(sim["eps"]),
        data_shape=sim["data_shape"],
        sigma=float(sim["sigma"]),
        seed=seed,
        dealias=bool(sim["dealias"]),
        snapshot_stride=int(sim["snapshot_stride"]),
        nonlinear=bool(sim["nonlinear"]),
        shear=bool(sim["shear"]),
        store_snapshots=bool(sim["store_snapshots"]),
    )


SIM_DEFAULTS = {
    "nu": 1e-2, "n_x": 256, "n_y": 256, "half_length": 180.0,
    "t_end": 50.0, "dt": 0.025, "eps": 0.0, "data_shape": "gaussian",
    "sigma": 6.0, "dealias": True, "snapshot_stride": 20,
    "nonlinear": True, "shear": True, "store_snapshots": False,
}

KERNEL_EVAL_DEFAULTS = {
    "nu": 1.0, "tau": 1.0,
    "x": [0.0], "y": [0.0], "y_prime": [0.0],
    "derivative": "none",
}

KERNEL_NORMS_DEFAULTS = {
    "nu_list": [1e-1, 1e-2],
    "tau_over_nu": [0.01, 1.0, 100.0],
    "p_list": [1.0, 2.0],
    "slice": "source",
    "derivative": "none",
}

VERIFY_DEFAULTS = {
    "nu_list": [1e-1, 1e-2],
    "tau_over_nu": [0.01, 0.03, 120.0, 400.0, 1200.0],
    "p_list": [1.0, 10.0 / 9.0, 4.0 / 3.0, 5.0 / 3.0, 2.0],
    "lemmas": ["3.1", "3.2", "3.3"],
    "closed_form_rtol": 1e-6,
    "ratio_spread_rtol": 1e-6,
    "slope_atol": 0.05,
    "envelope_exponent_shift": 0.0,   # fault injection: nonzero must fail
}

LINEAR_DEMO_DEFAULTS = {
    "nu": 1e-2, "sigma": 1.0,
    "window": [5.0, 50.0],       # in rescaled time
    "n_samples": 60,
}

SCAN_DEFAULTS = {
    "nu_list": [1e-2, 3e-3, 1e-3],
    "c_list": [37.5, 37500.0],
    "horizon": 50.0,
    "delta": None,
    "time_scale": "rescaled",
    "rel_tol": 0.10,
    "sim": {k: v for k, v in SIM_DEFAULTS.items()
            if k not in ("nu", "eps", "t_end", "nonlinear")},
}


# ------------------------------------------------------------ kernel-eval

def cmd_kernel_eval(args) -> int:
    cfg = load_config(KERNEL_EVAL_DEFAULTS, args.config)
    outdir = _resolve_out(args.out)
    _echo_config(outdir, cfg)
    params = KernelParams(float(cfg["nu"]), float(cfg["tau"]))
    deriv = cfg["derivative"]
    rows = ["nu,tau,x,y,y_prime,derivative,value"]
    for x in cfg["x"]:
        for y in cfg["y"]:
            for yp in cfg["y_prime"]:
                if deriv == "none":
                    v = eval_green(params, x=float(x), y=float(y), y_prime=float(yp))
                else:
                    v = eval_green_grad(params, which=deriv,
                                        x=float(x), y=float(y), y_prime=float(yp))
                rows.append(",".join([_fmt(params.nu), _fmt(params.tau), _fmt(float(x)),
                                      _fmt(float(y)), _fmt(float(yp)), deriv, _fmt(v)]))
    text = "\n".join(rows) + "\n"
    write_atomic(outdir / "kernel_eval.csv", text)
    sys.stdout.write(text)
    return 0


# ------------------------------------------------------------ kernel-norms

def cmd_kernel_norms(args) -> int:
    cfg = load_config(KERNEL_NORMS_DEFAULTS, args.config)
    outdir = _resolve_out(args.out)
    _echo_config(outdir, cfg)
    rows = ["p,nu,tau,slice,derivative,quadrature,closed_form,envelope"]
    for p in cfg["p_list"]:
        for nu in cfg["nu_list"]:
            for r in cfg["tau_over_nu"]:
                params = KernelParams(float(nu), float(r) * float(nu))
                q = kernel_lp_quadrature(
                    NormQuery(params, float(p), cfg["slice"], cfg["derivative"]))
                closed = (kernel_lp_closed_form(params, float(p))
                          if cfg["derivative"] == "none" else math.nan)
                lemma = {"none": "3.1", "x": "3.2", "x_prime": "3.2",
                         "y": "3.3", "y_prime": "3.3"}[cfg["derivative"]]
                env = lemma_envelope(lemma, params, float(p))
                rows.append(",".join([_fmt(float(p)), _fmt(params.nu), _fmt(params.tau),
                                      cfg["slice"], cfg["derivative"],
                                      _fmt(q), _fmt(closed), _fmt(env)]))
    write_atomic(outdir / "kernel_norms.csv", "\n".join(rows) + "\n")
    return 0


# ------------------------------------------------------------ verify

def cmd_verify(args) -> int:
    cfg = load_config(VERIFY_DEFAULTS, args.config)
    outdir = _resolve_out(args.out)
    _echo_config(outdir, cfg)
    failures = []
    summary = []
    shift = float(cfg["envelope_exponent_shift"])
    for lemma in cfg["lemmas"]:
        grid = [(nu, r * nu) for nu in cfg["nu_list"] for r in cfg["tau_over_nu"]]
        rep = verify_lemma_bounds(lemma, grid, cfg["p_list"],
                                  envelope_exponent_shift=shift)
        write_atomic(outdir / f"lemma_{lemma.replace('.', '_')}.csv", rep.to_csv())
        for pt in rep.flagged:
            failures.append(f"lemma {lemma}: measured exceeds calibrated envelope at "
                            f"(nu, tau, p) = {pt}")
        if lemma == "3.1":
            # sharp closed form: quadrature agreement and parameter-free ratios
            ratios = {}
            for row in rep.rows:
                params = KernelParams(row["nu"], row["tau"])
                closed = kernel_lp_closed_form(params, row["p"])
                if abs(row["measured"] - closed) > cfg["closed_form_rtol"] * closed:
                    failures.append(
                        f"lemma 3.1: quadrature vs closed form off at "
                        f"(nu, tau, p) = ({row['nu']:g}, {row['tau']:g}, {row['p']:g})")
                ratios.setdefault(row["p"], []).append(row["ratio"])
            for p, vals in ratios.items():
                spread = (max(vals) - min(vals)) / (sum(vals) / len(vals))
                if spread > cfg["ratio_spread_rtol"]:
                    failures.append(f"lemma 3.1: ratio spread {spread:.2e} at p = {p:g}")
                summary.append(f"lemma 3.1 p={p:g}: ratio spread {spread:.2e}")
        else:
            for (nu, p, regime), slope in sorted(rep.fitted_exponents.items()):
                if regime != "tau>>nu":
                    continue
                want = envelope_tau_slope(lemma, p, regime)
                summary.append(f"lemma {lemma} nu={nu:g} p={p:g}: slope {slope:+.4f} "
                               f"(envelope {want:+.4f})")
                if abs(slope - want) > cfg["slope_atol"]:
                    failures.append(
                        f"lemma {lemma}: fitted slope {slope:.4f} != envelope "
                        f"{want:.4f} at (nu, p) = ({nu:g}, {p:g})")
    write_atomic(outdir / "verify_summary.txt",
                 "\n".join(summary + [f"failures: {len(failures)}"]) + "\n")
    if failures:
        write_atomic(outdir / "failures.txt", "\n".join(failures) + "\n")
        sys.stderr.write("\n".join(failures) + "\n")
        return 1
    return 0


# ------------------------------------------------------------ linear-demo

def _traj_csv_path(outdir: Path, name: str, traj: Trajectory):
    write_atomic(outdir / name, traj.to_csv())


def cmd_linear_demo(args) -> int:
    cfg = load_config(LINEAR_DEMO_DEFAULTS, args.config)
    outdir = _resolve_out(args.out)
    _echo_config(outdir, cfg)
    nu, sigma = float(cfg["nu"]), float(cfg["sigma"])
    lo, hi = (float(v) for v in cfg["window"])
    n = int(cfg["n_samples"])
    taus = np.linspace(lo, hi, n)
    rows = ["nu,sigma,control,time_scale,window_lo,window_hi,alpha,residual"]
    shear_traj = linear_reference_trajectory(sigma, nu, taus / nu)
    heat_traj = linear_reference_trajectory(sigma, nu, taus / nu, shear=False)
    for name, traj in (("shear", shear_traj), ("heat", heat_traj)):
        for scale, window in (("rescaled", (lo, hi)), ("physical", (lo / nu, hi / nu))):
            fit = decay_fit(traj, window, time_scale=scale)
            rows.append(",".join([_fmt(nu), _fmt(sigma), name, scale,
                                  _fmt(window[0]), _fmt(window[1]),
                                  _fmt(fit.alpha), _fmt(fit.residual)]))
    write_atomic(outdir / "decay_fits.csv", "\n".join(rows) + "\n")
    _traj_csv_path(outdir, "trajectory_shear.csv", shear_traj)
    _traj_csv_path(outdir, "trajectory_heat.csv", heat_traj)
    return 0


# ------------------------------------------------------------ simulate

def cmd_simulate(args) -> int:
    cfg = load_config({"sim": SIM_DEFAULTS}, args.config)
    outdir = _resolve_out(args.out)
    _echo_config(outdir, cfg)
    sim_cfg = _sim_config(cfg["sim"], args.seed)
    traj = simulate(sim_cfg)
    write_atomic(outdir / "trajectory.csv", traj.to_csv())
    if sim_cfg.store_snapshots:
        snapdir = outdir / "snapshots"
        snapdir.mkdir(exist_ok=True)
        for i, (t, f) in enumerate(traj.snapshots):
            save_snapshot(snapdir / f"snap_{i:05d}.bin", f, t, sim_cfg.nu)
    summary = {
        "nu": sim_cfg.nu, "eps": sim_cfg.eps, "seed": args.seed,
        "omega0_l1": traj.omega0_l1, "omega0_l2": traj.omega0_l2,
        "tail_ratio": traj.tail_ratio, "boundary_defect": traj.boundary_defect,
        "weighted_sup_rescaled": weighted_sup(traj, "rescaled") if traj.times else 0.0,
        "failed": traj.failed,
    }
    write_atomic(outdir / "run_summary.yaml", yaml.safe_dump(summary, sort_keys=True))
    if traj.failed:
        write_atomic(outdir / "FAILED", traj.failed + "\n")
        return 1
    return 0


# ------------------------------------------------------------ threshold-scan

class _CachedRun:
    """simulate() wrapper caching per-(nu, eps) trajectories on disk, so
    interrupted scans resume by skipping completed cells."""

    def __init__(self, cells_dir: Path):
        self.cells_dir = cells_dir

    def _path(self, cfg: SimConfig) -> Path:
        tag = (f"nu{cfg.nu:.9e}_eps{cfg.eps:.9e}_T{cfg.t_end:g}"
               f"_lin{int(cfg.nonlinear)}_seed{cfg.seed}")
        return self.cells_dir / f"{tag}.yaml"

    def __call__(self, cfg: SimConfig) -> Trajectory:
        path = self._path(cfg)
        if path.exists():
            data = yaml.safe_load(path.read_text())
            traj = Trajectory(nu=cfg.nu, eps=cfg.eps)
            traj.times = data["times"]
            traj.l2_norms = data["l2_norms"]
            traj.linf_norms = [math.nan] * len(data["times"])
            traj.velocity_l2 = [math.nan] * len(data["times"])
            traj.enstrophy_flux = [math.nan] * len(data["times"])
            traj.viscous_dissipation = [math.nan] * len(data["times"])
            traj.tail_ratio = data["tail_ratio"]
            traj.boundary_defect = data["boundary_defect"]
            traj.failed = data["failed"]
            return traj
        traj = simulate(cfg)
        payload = {
            "times": [float(t) for t in traj.times],
            "l2_norms": [float(v) for v in traj.l2_norms],
            "tail_ratio": float(traj.tail_ratio),
            "boundary_defect": float(traj.boundary_defect),
            "failed": traj.failed,
        }
        write_atomic(path, yaml.safe_dump(payload))
        return traj


class _NuWorker:
    """Picklable single-nu scan job for the process pool."""

    def __init__(self, cfg_dict, seed, horizon, c_list, delta, time_scale,
                 rel_tol, cells_dir):
        self.cfg_dict = cfg_dict
        self.seed = seed
        self.horizon = horizon
        self.c_list = c_list
        self.delta = delta
        self.time_scale = time_scale
        self.rel_tol = rel_tol
        self.cells_dir = cells_dir

    def __call__(self, nu: float):
        template = _sim_config({**self.cfg_dict, "nu": nu, "eps": 0.0,
                                "t_end": self.horizon, "nonlinear": True}, self.seed)
        run = _CachedRun(Path(self.cells_dir))
        return scan_single_nu(nu, min(self.c_list), max(self.c_list), template,
                              self.horizon, self.delta, self.time_scale,
                              self.rel_tol, run_fn=run)


def cmd_threshold_scan(args) -> int:
    cfg = load_config(SCAN_DEFAULTS, args.config)
    outdir = _resolve_out(args.out)
    _echo_config(outdir, cfg)
    cells_dir = outdir / "cells"
    cells_dir.mkdir(exist_ok=True)
    nu_list = sorted(float(v) for v in cfg["nu_list"])
    c_list = [float(v) for v in cfg["c_list"]]
    horizon = float(cfg["horizon"])
    run = _CachedRun(cells_dir)
    template = _sim_config({**cfg["sim"], "nu": nu_list[-1], "eps": 0.0,
                            "t_end": horizon, "nonlinear": True}, args.seed)
    delta = cfg["delta"]
    if delta is None:
        delta = calibrate_delta(template, nu_list[-1], horizon,
                                cfg["time_scale"], run_fn=run)

    if args.jobs > 1:
        worker = _NuWorker(cfg["sim"], args.seed, horizon, c_list, float(delta),
                           cfg["time_scale"], float(cfg["rel_tol"]), str(cells_dir))
        with Pool(args.jobs) as pool:
            parts = pool.map(worker, nu_list)
        res = ThresholdScanResult(horizon=horizon, delta=float(delta))
        for rec, evals, excl in parts:      # deterministic (nu-ordered) reduce
            res.per_nu.append(rec)
            res.evaluations.extend(evals)
            res.excluded.extend(excl)
        res.censored = any(r["censored"] for r in res.per_nu)
        res.gamma_fit, res.gamma_ci = fit_gamma(res.per_nu, seed=args.seed)
    else:
        res = threshold_scan(nu_list, c_list, template, horizon,
                             delta=float(delta), time_scale=cfg["time_scale"],
                             rel_tol=float(cfg["rel_tol"]), seed=args.seed, run_fn=run)

    write_atomic(outdir / "threshold.csv", res.table_csv())
    write_atomic(outdir / "scan_long.dat", res.long_csv())
    summary = {
        "delta": float(res.delta), "horizon": res.horizon, "seed": args.seed,
        "gamma_fit": None if math.isnan(res.gamma_fit) else float(res.gamma_fit),
        "gamma_ci": [None if math.isnan(v) else float(v) for v in res.gamma_ci],
        "censored": bool(res.censored),
        "excluded": [[float(nu), float(c), reason] for nu, c, reason in res.excluded],
    }
    write_atomic(outdir / "scan_summary.yaml", yaml.safe_dump(summary, sort_keys=True))
    return 0


# ------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="couettelab",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [
        ("kernel-eval", cmd_kernel_eval),
        ("kernel-norms", cmd_kernel_norms),
        ("verify", cmd_verify),
        ("linear-demo", cmd_linear_demo),
        ("simulate", cmd_simulate),
        ("threshold-scan", cmd_threshold_scan),
    ]:
        p = sub.add_parser(name, description=__doc__,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", default=None, help="YAML config path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="64-bit run seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel scan jobs")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # failure marker, never a silent partial tree
        try:
            outdir = _resolve_out(args.out)
            write_atomic(outdir / "FAILED", f"{type(exc).__name__}: {exc}\n")
        except Exception:
            pass
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
