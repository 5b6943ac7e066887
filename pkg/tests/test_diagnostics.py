"""Diagnostics: decay fits, bootstrap audit, GN ratios, threshold scan logic."""

import math
from dataclasses import replace

import numpy as np
import pytest

from couettelab.diagnostics import (
    BootstrapReport,
    bootstrap_audit,
    calibrate_delta,
    decay_fit,
    gn_admissible_exponent,
    gn_check,
    threshold_scan,
    weighted_sup,
)
from couettelab.solver import SimConfig, Trajectory, linear_reference_trajectory
from couettelab.spectral import GridSpec, ScalarField, VelocityField, biot_savart, transform_forward


def synthetic_traj(times, l2, nu=1e-2, eps=1.0):
    traj = Trajectory(nu=nu, eps=eps)
    for t, v in zip(times, l2):
        traj.times.append(float(t))
        traj.l2_norms.append(float(v))
        traj.linf_norms.append(0.0)
        traj.velocity_l2.append(0.0)
        traj.enstrophy_flux.append(0.0)
        traj.viscous_dissipation.append(0.0)
    return traj


# ------------------------------------------------------------------ decay_fit


def test_decay_fit_exact_power_laws():
    ts = np.linspace(0.0, 60.0, 200)
    for alpha, amp in ((1.0, 3.7), (0.5, 0.2)):
        traj = synthetic_traj(ts, amp * (1 + ts) ** (-alpha))
        fit = decay_fit(traj, (0.0, 60.0))
        assert fit.alpha == pytest.approx(alpha, abs=1e-6)
        assert fit.amplitude == pytest.approx(amp, rel=1e-6)
        assert fit.residual <= 1e-10


def test_decay_fit_window_and_errors():
    ts = np.linspace(0.0, 10.0, 50)
    traj = synthetic_traj(ts, (1 + ts) ** -1.0)
    with pytest.raises(ValueError):
        decay_fit(traj, (100.0, 200.0))       # empty window
    with pytest.raises(ValueError):
        decay_fit(traj, (0.0, 0.5))           # too few samples
    bad = synthetic_traj(ts, np.zeros_like(ts))
    with pytest.raises(ValueError):
        decay_fit(bad, (0.0, 10.0))           # nonpositive norms
    with pytest.raises(ValueError):
        decay_fit(traj, (0.0, 10.0), time_scale="sidereal")


def test_decay_fit_rescaled_axis_linear_couette():
    # reference linear run at nu = 1e-2, rescaled window [5, 50]: alpha near 1
    nu = 1e-2
    taus = np.linspace(5.0, 50.0, 40)
    traj = linear_reference_trajectory(1.0, nu, taus / nu)
    fit = decay_fit(traj, (5.0, 50.0), time_scale="rescaled")
    assert 0.9 <= fit.alpha <= 1.1
    heat = linear_reference_trajectory(1.0, nu, taus / nu, shear=False)
    fit_h = decay_fit(heat, (5.0, 50.0), time_scale="rescaled")
    assert 0.4 <= fit_h.alpha <= 0.6


# ------------------------------------------------------------------ bootstrap


def test_bootstrap_zero_trajectory():
    ts = np.linspace(0, 5, 20)
    rep = bootstrap_audit(synthetic_traj(ts, np.zeros_like(ts)), eps=1.0, delta=2.0)
    assert rep.hypothesis_ok
    assert rep.conclusion_margin == 0.0
    assert rep.first_violation is None


def test_bootstrap_boundary_case_margin_two():
    # trajectory exactly on the hypothesis envelope: H holds, C fails at margin 2
    eps, delta, nu = 0.3, 1.7, 1e-2
    ts = np.linspace(0, 50, 60)
    taus = nu * ts
    l2 = delta * eps / (1 + taus)
    rep = bootstrap_audit(synthetic_traj(ts, l2, nu=nu), eps=eps, delta=delta)
    assert rep.hypothesis_ok
    assert rep.conclusion_margin == pytest.approx(2.0, rel=1e-12)
    assert not rep.conclusion_ok


def test_bootstrap_violation_and_monotonicity():
    eps, delta, nu = 1.0, 1.0, 1e-2
    ts = np.linspace(0, 100, 200)
    taus = nu * ts
    base = 0.9 / (1 + taus)
    rep = bootstrap_audit(synthetic_traj(ts, base, nu=nu), eps, delta)
    assert rep.hypothesis_ok
    # scaling norms up can only break the hypothesis, never repair it
    for c in (1.5, 3.0, 10.0):
        rep_c = bootstrap_audit(synthetic_traj(ts, c * base, nu=nu), eps, delta)
        if rep_c.hypothesis_ok:
            assert rep.hypothesis_ok
    rep3 = bootstrap_audit(synthetic_traj(ts, 3 * base, nu=nu), eps, delta)
    assert not rep3.hypothesis_ok
    assert rep3.first_violation is not None
    with pytest.raises(ValueError):
        bootstrap_audit(synthetic_traj(ts, base), eps=0.0, delta=1.0)


def test_weighted_sup_conventions():
    nu = 1e-1
    ts = np.array([0.0, 10.0])
    traj = synthetic_traj(ts, [1.0, 1.0], nu=nu)
    assert weighted_sup(traj, "physical") == pytest.approx(11.0)
    assert weighted_sup(traj, "rescaled") == pytest.approx(2.0)


# ------------------------------------------------------------------ gn_check


def test_gn_zero_field_flagged():
    g = GridSpec(32, 32, 2.0)
    z = ScalarField(g, np.zeros((32, 32)))
    out = gn_check(VelocityField(z, z))
    assert all(rec["ratio"] is None for rec in out)


def test_gn_single_mode_closed_form():
    # u = (0, cos x) from omega = sin x on the 2 pi box
    g = GridSpec(64, 64, np.pi)
    xx, _ = g.meshgrid()
    u = biot_savart(transform_forward(ScalarField(g, np.sin(xx))))
    out = gn_check(u, pairs=[(4.0, 0.75)])
    rec = out[0]
    area_y = 2 * np.pi
    # ||cos x||_4^4 = integral cos^4 = (3/8) 2 pi per x-period, times y-extent
    l4 = (0.75 * np.pi * area_y) ** 0.25
    l2 = math.sqrt(np.pi * area_y)
    hess = l2  # grad^2 of cos x has |k|^2 = 1
    assert rec["lq"] == pytest.approx(l4, rel=1e-10)
    assert rec["l2"] == pytest.approx(l2, rel=1e-10)
    assert rec["hess"] == pytest.approx(hess, rel=1e-10)
    assert rec["ratio"] == pytest.approx(l4 / (l2**0.75 * hess**0.25), rel=1e-10)


def test_gn_admissibility_enforced():
    g = GridSpec(16, 16, 1.0)
    f = ScalarField(g, np.ones((16, 16)))
    with pytest.raises(ValueError):
        gn_check(VelocityField(f, f), pairs=[(10.0, 0.9)])  # the paper's slip
    assert gn_admissible_exponent(10.0) == pytest.approx(0.6)
    assert gn_admissible_exponent(5.0 / 2.0) == pytest.approx(0.9)
    assert gn_admissible_exponent(4.0) == pytest.approx(0.75)


def test_gn_scaling_invariance():
    # same samples viewed on a rescaled box: admissible ratios are unchanged
    rng = np.random.default_rng(7)
    vals = rng.normal(size=(64, 64))
    for L in (2.0, 4.0):
        g = GridSpec(64, 64, L)
        w = transform_forward(ScalarField(g, vals))
        u = biot_savart(w)
        out = gn_check(u)
        if L == 2.0:
            ref = [rec["ratio"] for rec in out]
        else:
            got = [rec["ratio"] for rec in out]
            # u itself rescales, but the admissible ratio is scale-free
            for a, b in zip(ref, got):
                assert a == pytest.approx(b, rel=1e-10)


# ------------------------------------------------------------------ scan


def make_fake_run(eps_star_fn, lin_const=0.5):
    """Synthetic dynamics: weighted sup = lin_const*eps if eps <= eps*(nu),
    else 3*lin_const*eps (a run that refuses to decay)."""

    def run(cfg: SimConfig) -> Trajectory:
        ts = np.linspace(0.0, cfg.t_end, 30)
        taus = cfg.nu * ts
        if not cfg.nonlinear or cfg.eps <= eps_star_fn(cfg.nu):
            l2 = lin_const * cfg.eps / (1 + taus)
        else:
            l2 = 3.0 * lin_const * cfg.eps / (1 + taus)
        return synthetic_traj(ts, l2, nu=cfg.nu, eps=cfg.eps)

    return run


def scan_template():
    return SimConfig(nu=1e-2, grid=GridSpec(16, 16, 4.0), t_end=1.0, dt=0.1, eps=1.0)


def test_calibrate_delta_from_linear_run():
    run = make_fake_run(lambda nu: math.inf)
    d = calibrate_delta(scan_template(), nu=1e-2, horizon=50.0, run_fn=run)
    assert d == pytest.approx(1.0, rel=1e-12)  # 2 x 0.5


def test_threshold_scan_recovers_exponent():
    gamma_true = 0.6
    run = make_fake_run(lambda nu: 0.3 * nu**gamma_true)
    res = threshold_scan(
        nu_list=[1e-3, 1e-2, 1e-1], c_list=[0.05, 5.0],
        cfg_template=scan_template(), horizon=50.0, run_fn=run, seed=3,
    )
    assert res.delta == pytest.approx(1.0, rel=1e-12)
    assert not res.censored
    for rec in res.per_nu:
        assert rec["censored"] is None
        assert rec["bracket"][0] <= rec["eps_star"] <= rec["bracket"][1]
        assert rec["bracket"][1] / rec["bracket"][0] <= 1.12
        # the true threshold lies in the bracket
        assert rec["bracket"][0] <= 0.3 * rec["nu"] ** gamma_true <= rec["bracket"][1] * 1.11
    # monotone in nu
    stars = [rec["eps_star"] for rec in res.per_nu]
    assert all(b >= a for a, b in zip(stars, stars[1:]))
    assert res.gamma_fit == pytest.approx(gamma_true, abs=0.08)
    assert res.gamma_ci[0] - 0.02 <= gamma_true <= res.gamma_ci[1] + 0.02


def test_threshold_scan_censoring():
    run_all_stable = make_fake_run(lambda nu: math.inf)
    res = threshold_scan([1e-3, 1e-2], [0.1, 1.0], scan_template(), 10.0,
                         run_fn=run_all_stable)
    assert res.censored
    assert all(rec["censored"] == "top" for rec in res.per_nu)
    assert all(rec["eps_star"] == pytest.approx(1.0 * rec["nu"] ** 0.75) for rec in res.per_nu)

    run_all_unstable = make_fake_run(lambda nu: 0.0)
    res2 = threshold_scan([1e-3, 1e-2], [0.1, 1.0], scan_template(), 10.0,
                          run_fn=run_all_unstable)
    assert all(rec["censored"] == "bottom" for rec in res2.per_nu)


def test_threshold_scan_excludes_failed_runs():
    def run(cfg):
        traj = make_fake_run(lambda nu: math.inf)(cfg)
        if cfg.nonlinear and cfg.eps > 0.03:
            traj.failed = "t=1: boom"
        return traj

    res = threshold_scan([1e-3, 1e-2], [0.1, 10.0], scan_template(), 10.0,
                         delta=1.0, run_fn=run)
    assert res.excluded
    assert all(rec["censored"] == "excluded" for rec in res.per_nu)


def test_threshold_scan_input_validation():
    run = make_fake_run(lambda nu: 1.0)
    with pytest.raises(ValueError):
        threshold_scan([1e-2, 2e-2], [0.1, 1.0], scan_template(), 1.0, run_fn=run)
    with pytest.raises(ValueError):
        threshold_scan([1e-3, 1e-2], [1.0, 1.0], scan_template(), 1.0, run_fn=run)


def test_scan_csv_outputs():
    run = make_fake_run(lambda nu: 0.3 * nu**0.75)
    res = threshold_scan([1e-3, 1e-2], [0.05, 5.0], scan_template(), 20.0, run_fn=run)
    table = res.table_csv().splitlines()
    assert table[0] == "nu,stable,unstable,eps_star,censored"
    assert len(table) == 3
    long = res.long_csv().splitlines()
    assert long[0] == "nu c sup_weighted stable"
    assert len(long) == 1 + len(res.evaluations)
