"""CLI: golden columns, determinism, failure markers, resumable scans."""

import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from couettelab.cli import main
from couettelab.kernel import KernelParams, eval_green


def run_cli(*argv):
    return main(list(argv))


def write_yaml(path, payload):
    path.write_text(yaml.safe_dump(payload))
    return str(path)


def test_help_documents_columns(capsys):
    with pytest.raises(SystemExit):
        run_cli("simulate", "--help")
    out = capsys.readouterr().out
    assert "t,l2,linf,u_l2,enstrophy_flux" in out
    assert "nu,stable,unstable,eps_star,censored" in out


def test_kernel_eval_roundtrip(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", {
        "nu": 1.0, "tau": 1.0,
        "x": [0.0, 0.5], "y": [0.0], "y_prime": [0.0, -0.3],
    })
    out = tmp_path / "out"
    assert run_cli("kernel-eval", "--config", cfg, "--out", str(out)) == 0
    text = (out / "kernel_eval.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "nu,tau,x,y,y_prime,derivative,value"
    assert len(lines) == 5
    # re-reading the CSV reproduces the printed values bit-exactly
    params = KernelParams(1.0, 1.0)
    for row in lines[1:]:
        nu, tau, x, y, yp, deriv, val = row.split(",")
        want = eval_green(params, x=float(x), y=float(y), y_prime=float(yp))
        assert float(val) == want
    # the peak value is the frozen spec number
    assert float(lines[1].split(",")[-1]) == pytest.approx(0.07645556161877673, rel=1e-14)
    assert capsys.readouterr().out == text


def test_kernel_eval_empty_grid(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"x": [], "y": [], "y_prime": []})
    out = tmp_path / "out"
    assert run_cli("kernel-eval", "--config", cfg, "--out", str(out)) == 0
    assert (out / "kernel_eval.csv").read_text() == "nu,tau,x,y,y_prime,derivative,value\n"


def test_kernel_eval_invalid_params_marker(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"tau": -1.0})
    out = tmp_path / "out"
    assert run_cli("kernel-eval", "--config", cfg, "--out", str(out)) == 2
    assert (out / "FAILED").exists()


def test_unknown_config_keys_rejected(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"paddle": 3})
    out = tmp_path / "out"
    assert run_cli("kernel-eval", "--config", cfg, "--out", str(out)) == 2
    assert "unknown keys" in (out / "FAILED").read_text()


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("COUETTELAB_OUTPUT_ROOT", str(tmp_path / "root"))
    assert run_cli("kernel-eval", "--out", "rel") == 0
    assert (tmp_path / "root" / "rel" / "kernel_eval.csv").exists()


def test_kernel_norms_columns(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {
        "nu_list": [1e-2], "tau_over_nu": [1.0, 100.0], "p_list": [1.0, 2.0],
    })
    out = tmp_path / "out"
    assert run_cli("kernel-norms", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "kernel_norms.csv").read_text().splitlines()
    assert lines[0] == "p,nu,tau,slice,derivative,quadrature,closed_form,envelope"
    assert len(lines) == 5
    # p = 1 rows: quadrature == closed form == envelope == 1 (mass)
    for row in lines[1:]:
        cells = row.split(",")
        if cells[0] == "1":
            assert float(cells[5]) == pytest.approx(1.0, abs=1e-8)
            assert float(cells[6]) == 1.0


VERIFY_SMALL = {
    "nu_list": [1e-2],
    "tau_over_nu": [150.0, 320.0, 700.0, 1500.0],
    "p_list": [1.0, 2.0],
    "lemmas": ["3.1", "3.2", "3.3"],
}


def test_verify_default_grid_passes(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", VERIFY_SMALL)
    out = tmp_path / "out"
    assert run_cli("verify", "--config", cfg, "--out", str(out)) == 0
    assert (out / "verify_summary.txt").exists()
    assert not (out / "failures.txt").exists()
    lines = (out / "lemma_3_1.csv").read_text().splitlines()
    assert lines[0] == "lemma,p,nu,tau,slice,derivative,measured,envelope,ratio"
    # p = 1 rows have ratio exactly 1 (mass over unit envelope)
    p1 = [r for r in lines[1:] if r.split(",")[1] == "1"]
    assert p1
    for row in p1:
        assert float(row.split(",")[-1]) == pytest.approx(1.0, abs=1e-8)


def test_verify_injected_wrong_exponent_fails(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml",
                     {**VERIFY_SMALL, "lemmas": ["3.1"],
                      "envelope_exponent_shift": -0.15})
    out = tmp_path / "out"
    assert run_cli("verify", "--config", cfg, "--out", str(out)) == 1
    failures = (out / "failures.txt").read_text()
    assert "lemma 3.1" in failures
    capsys.readouterr()


def test_linear_demo_alpha_near_one(tmp_path):
    out = tmp_path / "out"
    assert run_cli("linear-demo", "--out", str(out)) == 0
    lines = (out / "decay_fits.csv").read_text().splitlines()
    assert lines[0] == "nu,sigma,control,time_scale,window_lo,window_hi,alpha,residual"
    fits = {}
    for row in lines[1:]:
        cells = row.split(",")
        fits[(cells[2], cells[3])] = float(cells[6])
    assert 0.9 <= fits[("shear", "rescaled")] <= 1.1
    assert 0.4 <= fits[("heat", "rescaled")] <= 0.6
    # both conventions are reported
    assert ("shear", "physical") in fits
    assert (out / "trajectory_shear.csv").read_text().startswith("t,l2,linf,u_l2,enstrophy_flux")


SIM_SMALL = {"sim": {
    "nu": 1e-2, "n_x": 32, "n_y": 32, "half_length": 8.0,
    "t_end": 0.5, "dt": 0.1, "eps": 0.1, "sigma": 0.8,
    "snapshot_stride": 2, "store_snapshots": True,
}}


def test_simulate_zero_amplitude(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml",
                     {"sim": {**SIM_SMALL["sim"], "eps": 0.0, "store_snapshots": False}})
    out = tmp_path / "out"
    assert run_cli("simulate", "--config", cfg, "--out", str(out)) == 0
    rows = (out / "trajectory.csv").read_text().splitlines()[1:]
    assert rows
    assert all(float(r.split(",")[1]) == 0.0 for r in rows)


def test_simulate_deterministic_and_snapshots(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", SIM_SMALL)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli("simulate", "--config", cfg, "--out", str(out1), "--seed", "7") == 0
    assert run_cli("simulate", "--config", cfg, "--out", str(out2), "--seed", "7") == 0
    for name in ("trajectory.csv", "run_summary.yaml", "config_resolved.yaml"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    snaps1 = sorted((out1 / "snapshots").glob("*.bin"))
    snaps2 = sorted((out2 / "snapshots").glob("*.bin"))
    assert snaps1 and len(snaps1) == len(snaps2)
    for a, b in zip(snaps1, snaps2):
        assert a.read_bytes() == b.read_bytes()


SCAN_SMALL = {
    "nu_list": [1e-1, 1e-2],
    "c_list": [0.01, 0.1],
    "horizon": 2.0,
    "sim": {
        "n_x": 32, "n_y": 32, "half_length": 8.0, "dt": 0.1,
        "sigma": 0.8, "data_shape": "gaussian", "dealias": True,
        "snapshot_stride": 2, "shear": True, "store_snapshots": False,
    },
}


def test_threshold_scan_smoke_and_resume(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", SCAN_SMALL)
    out = tmp_path / "out"
    assert run_cli("threshold-scan", "--config", cfg, "--out", str(out)) == 0
    table = (out / "threshold.csv").read_text().splitlines()
    assert table[0] == "nu,stable,unstable,eps_star,censored"
    assert len(table) == 3
    assert (out / "scan_long.dat").read_text().startswith("nu c sup_weighted stable")
    summary = yaml.safe_load((out / "scan_summary.yaml").read_text())
    assert summary["delta"] > 0
    cells = sorted((out / "cells").glob("*.yaml"))
    assert cells
    stamps = [c.stat().st_mtime_ns for c in cells]
    # rerun resumes: completed cells are reused, outputs unchanged
    before = (out / "threshold.csv").read_bytes()
    assert run_cli("threshold-scan", "--config", cfg, "--out", str(out)) == 0
    assert [c.stat().st_mtime_ns for c in sorted((out / "cells").glob("*.yaml"))] == stamps
    assert (out / "threshold.csv").read_bytes() == before


def test_threshold_scan_parallel_matches_serial(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", SCAN_SMALL)
    out1, out2 = tmp_path / "serial", tmp_path / "par"
    assert run_cli("threshold-scan", "--config", cfg, "--out", str(out1)) == 0
    assert run_cli("threshold-scan", "--config", cfg, "--out", str(out2), "--jobs", "2") == 0
    assert (out1 / "threshold.csv").read_bytes() == (out2 / "threshold.csv").read_bytes()
    assert (out1 / "scan_long.dat").read_bytes() == (out2 / "scan_long.dat").read_bytes()
