"""Decay-rate fitting, bootstrap auditing, GN ratios, threshold scanning.

Time conventions: the stability chain (Duhamel pieces, bootstrap envelopes)
is uniform in nu only in rescaled time tau = nu t (the nu^(1/2) in the
L2-from-L1 kernel bound pins the convention), so audits default to rescaled
time; decay fits take the convention as an argument and reports carry both.

The bootstrap shadow of the continuity argument: with data size eps and a
fixed delta,

    hypothesis  H: sup_t (1+t) ||w(t)||_2 <= delta eps
    conclusion  C: sup_t (1+t) ||w(t)||_2 <= (delta/2) eps

delta is calibrated, not invented: twice the measured linear-evolution
constant sup (1+tau) ||w_lin||_2 / eps on the coarsest nu of a scan, then
held fixed. A run is "stable" when H holds over the finite horizon (the
desk-scale stand-in for global existence; the horizon is always reported).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .solver import SimConfig, Trajectory, simulate
from .spectral import VelocityField, lp_norm_field, second_grad_l2

__all__ = [
    "DecayFit",
    "BootstrapReport",
    "ThresholdScanResult",
    "decay_fit",
    "bootstrap_audit",
    "gn_check",
    "gn_admissible_exponent",
    "threshold_scan",
    "calibrate_delta",
]

DEFAULT_GN_PAIRS = ((5.0 / 2.0, 9.0 / 10.0), (4.0, 3.0 / 4.0), (10.0, 3.0 / 5.0))
RESOLVED_TAIL = 1e-6


@dataclass
class DecayFit:
    alpha: float          # decay exponent: ||w|| ~ amplitude (1+t)^(-alpha)
    amplitude: float
    window: tuple
    residual: float
    time_scale: str
    n_samples: int

    def csv_row(self, nu=float("nan")):
        return (f"{nu:.17g},{self.window[0]:.17g},{self.window[1]:.17g},"
                f"{self.time_scale},{self.alpha:.17g},{self.residual:.17g}")


@dataclass
class BootstrapReport:
    delta: float
    eps: float
    hypothesis_ok: bool
    conclusion_margin: float      # sup (1+t)||w||_2 / (delta eps / 2)
    first_violation: float | None
    time_scale: str
    horizon: float

    @property
    def conclusion_ok(self) -> bool:
        return self.conclusion_margin <= 1.0


@dataclass
class ThresholdScanResult:
    per_nu: list = field(default_factory=list)
    gamma_fit: float = math.nan
    gamma_ci: tuple = (math.nan, math.nan)
    delta: float = math.nan
    horizon: float = math.nan
    censored: bool = False
    excluded: list = field(default_factory=list)   # unresolved runs: (nu, c, reason)
    evaluations: list = field(default_factory=list)  # (nu, c, sup_weighted, stable)

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["nu", "stable", "unstable", "eps_star", "censored"])
        for rec in self.per_nu:
            w.writerow([
                f"{rec['nu']:.17g}", f"{rec['bracket'][0]:.17g}",
                f"{rec['bracket'][1]:.17g}", f"{rec['eps_star']:.17g}",
                rec["censored"] or "",
            ])
        return buf.getvalue()

    def long_csv(self) -> str:
        lines = ["nu c sup_weighted stable"]
        for nu, c, sup, ok in self.evaluations:
            lines.append(f"{nu:.17g} {c:.17g} {sup:.17g} {int(ok)}")
        return "\n".join(lines) + "\n"


def _axis(traj: Trajectory, time_scale: str):
    if time_scale == "physical":
        return np.asarray(traj.times)
    if time_scale == "rescaled":
        return np.asarray(traj.rescaled_times())
    raise ValueError("time_scale must be 'physical' or 'rescaled'")


def decay_fit(traj: Trajectory, window, time_scale: str = "physical") -> DecayFit:
    """Least-squares fit of log ||w||_2 against log(1+t) inside the window.

    Returns alpha > 0 for decay (the fitted exponent of (1+t)^(-alpha))."""
    t_lo, t_hi = window
    ts = _axis(traj, time_scale)
    l2 = np.asarray(traj.l2_norms)
    sel = (ts >= t_lo) & (ts <= t_hi)
    if sel.sum() < 10:
        raise ValueError(f"window [{t_lo:g}, {t_hi:g}] holds {int(sel.sum())} samples; need >= 10")
    if np.any(l2[sel] <= 0):
        raise ValueError("nonpositive norms in fit window")
    x = np.log1p(ts[sel])
    y = np.log(l2[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return DecayFit(alpha=float(-slope), amplitude=float(math.exp(intercept)),
                    window=(t_lo, t_hi), residual=resid, time_scale=time_scale,
                    n_samples=int(sel.sum()))


def weighted_sup(traj: Trajectory, time_scale: str = "rescaled") -> float:
    """sup over recorded times of (1+t) ||w(t)||_2."""
    ts = _axis(traj, time_scale)
    return float(np.max((1.0 + ts) * np.asarray(traj.l2_norms))) if len(ts) else 0.0


def bootstrap_audit(traj: Trajectory, eps: float, delta: float,
                    time_scale: str = "rescaled") -> BootstrapReport:
    """Evaluate the bootstrap hypothesis and conclusion envelopes pointwise."""
    if eps <= 0 or delta <= 0:
        raise ValueError("eps and delta must be positive")
    ts = _axis(traj, time_scale)
    weighted = (1.0 + ts) * np.asarray(traj.l2_norms)
    sup = float(weighted.max()) if weighted.size else 0.0
    viol = np.nonzero(weighted > delta * eps)[0]
    first = float(ts[viol[0]]) if viol.size else None
    return BootstrapReport(
        delta=delta, eps=eps,
        hypothesis_ok=viol.size == 0,
        conclusion_margin=sup / (0.5 * delta * eps),
        first_violation=first,
        time_scale=time_scale,
        horizon=float(ts[-1]) if len(ts) else 0.0,
    )


def gn_admissible_exponent(q: float) -> float:
    """2-D scaling exponent a for ||u||_q <= C ||u||_2^a ||grad^2 u||_2^(1-a)."""
    if q < 2:
        raise ValueError("q must be >= 2 for this interpolation family")
    return 0.5 + 1.0 / q


def gn_check(u: VelocityField, pairs=None):
    """Gagliardo-Nirenberg ratios ||u||_q / (||u||_2^a ||grad^2 u||_2^(1-a)).

    Pairs must be dimensionally admissible in 2-D (a = 1/2 + 1/q); finiteness
    is the assertion, a uniform bound along a run is the property. Zero
    denominators yield ratio None (reported, not raised).
    """
    pairs = DEFAULT_GN_PAIRS if pairs is None else pairs
    grid = u.grid
    speed = np.sqrt(u.u1.values**2 + u.u2.values**2)
    from .spectral import ScalarField  # local: avoid polluting module surface

    mag = ScalarField(grid, speed)
    l2 = math.sqrt(lp_norm_field(u.u1, 2.0) ** 2 + lp_norm_field(u.u2, 2.0) ** 2)
    hess = math.sqrt(second_grad_l2(u.u1) ** 2 + second_grad_l2(u.u2) ** 2)
    out = []
    for q, a in pairs:
        want = gn_admissible_exponent(q)
        if abs(a - want) > 1e-9:
            raise ValueError(
                f"pair (q={q:g}, a={a:g}) is not 2-D admissible; scaling forces a = {want:g}"
            )
        lq = lp_norm_field(mag, q)
        denom = l2**a * hess ** (1.0 - a)
        out.append({"q": q, "a": a, "lq": lq, "l2": l2, "hess": hess,
                    "ratio": (lq / denom) if denom > 0 else None})
    return out


def calibrate_delta(cfg_template: SimConfig, nu: float, horizon: float,
                    time_scale: str = "rescaled", run_fn=None) -> float:
    """delta = 2 x measured linear constant sup (1+t) ||w_lin||_2 / eps at nu.

    Mirrors the proof's requirement C3 <= delta/2 without inventing a number:
    the linear run *is* the measured C3 (per unit eps).
    """
    run_fn = run_fn or simulate
    cfg = replace(cfg_template, nu=nu, t_end=horizon, eps=1.0, nonlinear=False)
    traj = run_fn(cfg)
    if traj.failed:
        raise RuntimeError(f"delta calibration run failed: {traj.failed}")
    return 2.0 * weighted_sup(traj, time_scale) / cfg.eps


def scan_single_nu(nu: float, c_lo: float, c_hi: float, cfg_template: SimConfig,
                   horizon: float, delta: float, time_scale: str = "rescaled",
                   rel_tol: float = 0.10, run_fn=None):
    """Amplitude bisection at one nu; returns (record, evaluations, excluded).

    A run at eps = c nu^(3/4) is stable iff the bootstrap hypothesis holds
    with the given delta over the horizon. Failed or unresolved runs are
    excluded (reported), never silently classified.
    """
    run_fn = run_fn or simulate
    evaluations, excluded = [], []

    def classify(c):
        eps = c * nu**0.75
        cfg = replace(cfg_template, nu=nu, eps=eps, t_end=horizon)
        traj = run_fn(cfg)
        if traj.failed:
            excluded.append((nu, c, traj.failed))
            return None
        if traj.tail_ratio > RESOLVED_TAIL:
            excluded.append((nu, c, f"unresolved: tail {traj.tail_ratio:.2e}"))
            return None
        rep = bootstrap_audit(traj, eps, delta, time_scale)
        evaluations.append((nu, c, weighted_sup(traj, time_scale), rep.hypothesis_ok))
        return rep.hypothesis_ok

    lo_ok = classify(c_lo)
    hi_ok = classify(c_hi)
    if lo_ok is None or hi_ok is None:
        rec = {"nu": nu, "eps_star": math.nan, "bracket": (math.nan, math.nan),
               "censored": "excluded"}
        return rec, evaluations, excluded

    censored = None
    if lo_ok and hi_ok:
        censored = "top"
        lo, hi = c_hi, c_hi
    elif not lo_ok and not hi_ok:
        censored = "bottom"
        lo, hi = c_lo, c_lo
    else:
        lo, hi = c_lo, c_hi              # lo stable, hi unstable
        while hi / lo > 1.0 + rel_tol:
            mid = math.sqrt(lo * hi)
            ok = classify(mid)
            if ok is None:
                break                    # excluded run: stop refining, keep bracket
            if ok:
                lo = mid
            else:
                hi = mid
    rec = {"nu": nu, "eps_star": lo * nu**0.75,
           "bracket": (lo * nu**0.75, hi * nu**0.75), "censored": censored}
    return rec, evaluations, excluded


def fit_gamma(per_nu, seed: int = 0, n_boot: int = 200):
    """Slope of log eps_star vs log nu over non-censored rows, with a
    bracket-resampled confidence interval."""
    stars = [(r["nu"], r["bracket"]) for r in per_nu if r["censored"] is None]
    if len(stars) < 2:
        return math.nan, (math.nan, math.nan)
    rng = np.random.default_rng(seed)
    lx = np.log([nu for nu, _ in stars])
    gamma = float(np.polyfit(lx, np.log([b[0] for _, b in stars]), 1)[0])
    if n_boot < 1:
        return gamma, (math.nan, math.nan)
    samples = []
    for _ in range(n_boot):
        ys = [math.log(b[0]) + rng.uniform() * (math.log(b[1]) - math.log(b[0]))
              for _, b in stars]
        samples.append(np.polyfit(lx, ys, 1)[0])
    return gamma, (float(np.percentile(samples, 2.5)),
                   float(np.percentile(samples, 97.5)))


def threshold_scan(nu_list, c_list, cfg_template: SimConfig, horizon: float,
                   delta: float | None = None, time_scale: str = "rescaled",
                   rel_tol: float = 0.10, seed: int = 0, run_fn=None,
                   n_boot: int = 200) -> ThresholdScanResult:
    """Amplitude bisection per nu: eps = c nu^(3/4), stable iff the bootstrap
    hypothesis holds with the scan's delta over the horizon.

    c_list brackets the search (its extremes are evaluated first); censored
    scans (all stable / all unstable) are flagged, never extrapolated.
    Unresolved runs (spectral-tail audit failure) are excluded and reported.
    gamma is fitted from log eps_star vs log nu with a resampled CI; the
    sufficiency direction is the only acceptance-grade statement.
    """
    nu_list = sorted(float(n) for n in nu_list)
    c_lo, c_hi = float(min(c_list)), float(max(c_list))
    if c_lo >= c_hi:
        raise ValueError("c_list must span a nontrivial range")
    if len(nu_list) < 2 or nu_list[-1] / nu_list[0] < 10.0 - 1e-9:
        raise ValueError("nu_list must span at least one decade")
    run_fn = run_fn or simulate
    res = ThresholdScanResult(horizon=horizon)

    if delta is None:
        delta = calibrate_delta(cfg_template, nu_list[-1], horizon, time_scale, run_fn)
    res.delta = delta

    for nu in nu_list:
        rec, evals, excl = scan_single_nu(nu, c_lo, c_hi, cfg_template, horizon,
                                          delta, time_scale, rel_tol, run_fn)
        res.per_nu.append(rec)
        res.evaluations.extend(evals)
        res.excluded.extend(excl)
        if rec["censored"] is not None:
            res.censored = True

    res.gamma_fit, res.gamma_ci = fit_gamma(res.per_nu, seed=seed, n_boot=n_boot)
    return res
