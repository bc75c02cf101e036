import json
import os
import subprocess
import sys

import numpy as np
import pytest

from alignlab.cli import main
from alignlab.config import DEFAULTS, build_averaging, build_kernel, load_config
from alignlab.experiments import inverse_cdf_samples, sample_phase_space, van_der_corput
from alignlab.reporting import (
    ExperimentReport,
    FitResult,
    emit_outputs,
    fit_exponential_rate,
    fit_power_law,
    svg_line_plot,
    write_csv,
)
from alignlab.torus import TorusGeometry


def test_config_defaults_and_overrides(tmp_path):
    cfg = load_config()
    assert cfg.seed == DEFAULTS["experiment"]["seed"]
    path = tmp_path / "run.toml"
    path.write_text("[experiment]\nseed = 99\n[kernel]\nexponent = 12.0\n")
    cfg2 = load_config(path)
    assert cfg2.seed == 99
    assert cfg2.section("kernel")["exponent"] == 12.0
    assert cfg2.section("kernel")["family"] == "inverse_power"  # default survives
    cfg3 = load_config(path, seed=5)
    assert cfg3.seed == 5


def test_kernel_builders():
    geom = TorusGeometry(1, 1.0)
    cfg = load_config()
    k = build_kernel(cfg, geom)
    assert k.c0 > 0
    cfg.sections = {"kernel": {"family": "bochner"}}
    kb = build_kernel(cfg, geom)
    assert kb.c0 >= (1.0 - 0.5) ** 2 - 1e-12
    cfg.sections = {"kernel": {"family": "constant", "value": 0.3}}
    assert build_kernel(cfg, geom).c0 == 0.3
    avg = build_averaging(cfg, geom)
    assert avg.variant == "favre"


def test_fits_recover_known_laws():
    t = np.linspace(0, 5, 40)
    fit = fit_exponential_rate(t, 3.0 * np.exp(-1.7 * t))
    assert fit.value == pytest.approx(1.7, rel=1e-10)
    assert fit.residual < 1e-10 and fit.conclusive
    n = np.array([50, 100, 200, 400.0])
    fit2 = fit_power_law(n, 7.0 * n ** -0.5)
    assert fit2.value == pytest.approx(-0.5, rel=1e-10)


def test_inconclusive_fit_blocks_pass():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 30)
    noisy = np.exp(rng.normal(0, 2.0, 30))
    fit = fit_exponential_rate(t, noisy)
    assert not fit.conclusive
    rep = ExperimentReport(experiment="x", seed=0)
    rep.add_check("always-true-but-unfit", True, 1.0, 0.0, ">", fit=fit)
    assert rep.checks[0].status == "inconclusive"
    assert not rep.passed


def test_sampling_determinism_and_stratification():
    v = van_der_corput(8)
    assert np.array_equal(v, np.array([0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875, 0.0625]))
    xs = inverse_cdf_samples(lambda x: np.ones_like(x), 10)
    assert np.allclose(xs, (np.arange(10) + 0.5) / 10)
    a = sample_phase_space(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x),
                           lambda x: 0.3 * np.cos(2 * np.pi * x), tau=0.1, n=64)
    b = sample_phase_space(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x),
                           lambda x: 0.3 * np.cos(2 * np.pi * x), tau=0.1, n=64)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_write_csv_is_byte_deterministic(tmp_path):
    rows = [(1, 0.1, "a"), (2, 0.27182818284590452, "b")]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(p1, rows, header=["i", "x", "tag"])
    write_csv(p2, rows, header=["i", "x", "tag"])
    assert p1.read_bytes() == p2.read_bytes()
    raw = p1.read_bytes()
    assert raw.startswith(b"i,x,tag\r\n")  # RFC 4180 line endings
    assert repr(0.27182818284590452).encode() in raw  # shortest round-trip form


def test_emit_outputs_files_and_json(tmp_path):
    rep = ExperimentReport(experiment="demo", seed=3)
    rep.rows = [{"eps": 0.2, "val": 1.0}, {"eps": 0.1, "val": 0.5}]
    rep.fits.append(FitResult("slope", 1.0, 0.01))
    rep.add_check("val_halves", True, 0.5, 1.0)
    files = emit_outputs(rep, tmp_path, plots={
        "demo_val": dict(series={"val": ([0.2, 0.1], [1.0, 0.5])},
                         xlabel="eps", ylabel="val", logx=True, logy=True)})
    names = {os.path.basename(f) for f in files}
    assert names == {"demo_sweep.csv", "demo_summary.csv", "demo_report.json", "demo_val.svg"}
    payload = json.loads((tmp_path / "demo_report.json").read_text())
    assert payload["passed"] is True
    assert payload["checks"][0]["name"] == "val_halves"
    svg = (tmp_path / "demo_val.svg").read_text()
    assert svg.startswith('<?xml version="1.0"')
    assert "<polyline" in svg and "</svg>" in svg


def test_empty_report_emits_summary_only(tmp_path):
    rep = ExperimentReport(experiment="empty", seed=0)
    files = emit_outputs(rep, tmp_path)
    names = {os.path.basename(f) for f in files}
    assert names == {"empty_summary.csv", "empty_report.json"}


def test_svg_axes_cover_data_range(tmp_path):
    path = tmp_path / "p.svg"
    svg_line_plot(path, {"y": ([1.0, 2.0, 3.0], [10.0, 20.0, 15.0])}, xlabel="x", ylabel="y")
    body = path.read_text()
    assert "10" in body and "20" in body


def test_cli_threshold_and_determinism(tmp_path):
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    assert main(["threshold", "--out", str(out1), "--seed", "7"]) == 0
    assert main(["threshold", "--out", str(out2), "--seed", "7"]) == 0
    for name in ("threshold_sweep.csv", "threshold_summary.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_cli_simulate_macro(tmp_path):
    out = tmp_path / "macro"
    cfgfile = tmp_path / "c.toml"
    cfgfile.write_text("[macro]\nnx = 64\nt_final = 0.2\n")
    assert main(["simulate-macro", "--config", str(cfgfile), "--out", str(out)]) == 0
    text = (out / "macro_state.csv").read_text()
    assert text.splitlines()[0] == "x,rho,s,u,e"
    assert len(text.splitlines()) == 65
    assert (out / "macro_final.ckpt").exists()


def test_cli_simulate_micro(tmp_path):
    out = tmp_path / "micro"
    cfgfile = tmp_path / "c.toml"
    cfgfile.write_text("[micro]\ndim = 1\nn = 12\nmodel = \"cucker_smale\"\n"
                       "coupling = 2.0\nt_final = 0.1\ndt = 0.01\n")
    assert main(["simulate-micro", "--config", str(cfgfile), "--out", str(out)]) == 0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,i,x,vx,m"
    dheader = (out / "diagnostics.csv").read_text().splitlines()[0]
    assert dheader.startswith("t,velocity_diameter,flock_diameter,max_speed")
    assert (out / "micro_final.ckpt").exists()


def test_cli_simulate_kinetic(tmp_path):
    out = tmp_path / "kin"
    cfgfile = tmp_path / "c.toml"
    cfgfile.write_text("[kinetic]\nnx = 32\nnv = 64\nt_final = 0.05\nstepper = \"fpa\"\n")
    assert main(["simulate-kinetic", "--config", str(cfgfile), "--out", str(out)]) == 0
    header = (out / "kinetic_diagnostics.csv").read_text().splitlines()[0]
    assert header == ("t,mass,energy,modulated_energy,entropy,h_eps,g_eps,"
                      "fisher,ubar,momentum_drift")
    assert (out / "kinetic_final.ckpt").exists()
    assert (out / "kinetic_entropy.svg").exists()


def test_cli_spectral_gap(tmp_path):
    out = tmp_path / "gap"
    assert main(["spectral-gap", "--out", str(out)]) == 0
    text = (out / "spectral_gap.csv").read_text()
    grid, gap = text.splitlines()[1].split(",")
    assert float(gap) > 0


def test_cli_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "alignlab.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "alignlab" in proc.stdout
