"""Command-line entry point.

    alignlab <experiment> [--config file.toml] [--out dir] [--seed N]

Experiments: hetero, meanfield, monokinetic, maxwellian, relaxation,
threshold, plus the single-run drivers simulate-micro, simulate-kinetic,
simulate-macro and the spectral-gap estimator.  Outputs land in the output
directory as CSV sweeps, SVG plots, a machine-readable report.json, and
binary checkpoints for the simulate commands.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .averaging import AveragingModel, GridDensity, spectral_gap_estimate
from .config import RunConfig, build_averaging, build_kernel, load_config
from .errors import AlignlabError
from .experiments import EXPERIMENTS, sample_phase_space
from .fields import StrengthField, WeightField, write_checkpoint
from .gridops import grid_nodes
from .kinetic import (
    MaxwellianReference,
    bulk_velocity,
    fisher_information,
    fpa_step,
    maxwellian_state,
    maxwellian_step,
    modulated_energy,
    momentum_drift,
    monokinetic_step,
    moments,
    relative_entropy,
    vlasov_step,
)
from .macro import MacroState, e_quantity, run_macro
from .micro import CuckerSmale, MotschTadmor, ParticleEnsemble, SModel, WModel, run
from .reporting import emit_outputs, svg_line_plot, write_csv
from .torus import TorusGeometry

_PLOT_SPECS = {
    "meanfield": [("n", "w1_cauchy", True, True), ("n", "strength_sup_diff", True, True)],
    "monokinetic": [("eps", "combined", True, True), ("eps", "strength_sup_dist", True, True)],
    "maxwellian": [("eps", "entropy_T", True, True)],
    "relaxation": [("t", "entropy", False, True)],
}


def _plots_for(report):
    specs = _PLOT_SPECS.get(report.experiment, [])
    plots = {}
    for xkey, ykey, logx, logy in specs:
        rows = [r for r in report.rows if xkey in r and ykey in r]
        if not rows:
            continue
        group_key = "sigma" if ("sigma" in rows[0] and xkey != "sigma") else None
        series = {}
        if group_key:
            for gval in sorted({r[group_key] for r in rows}):
                sub = [r for r in rows if r[group_key] == gval]
                series[f"{group_key}={gval:g}"] = (
                    np.array([r[xkey] for r in sub], dtype=float),
                    np.array([r[ykey] for r in sub], dtype=float))
        else:
            series[ykey] = (np.array([r[xkey] for r in rows], dtype=float),
                            np.array([r[ykey] for r in rows], dtype=float))
        plots[f"{report.experiment}_{ykey}"] = dict(
            series=series, xlabel=xkey, ylabel=ykey,
            title=f"{report.experiment}: {ykey} vs {xkey}", logx=logx, logy=logy)
    return plots


def _run_experiment(name: str, cfg: RunConfig) -> int:
    report = EXPERIMENTS[name](cfg)
    emit_outputs(report, cfg.outdir, plots=_plots_for(report))
    for line in report.summary_lines():
        print(line)
    return 0 if report.passed else 1


def _simulate_micro(cfg: RunConfig) -> int:
    mc = cfg.section("micro")
    dim = int(mc["dim"])
    geom = TorusGeometry(dim=dim, period=float(mc["period"]))
    kernel = build_kernel(cfg, geom)
    n = int(mc["n"])
    rng = np.random.default_rng(cfg.seed)
    if dim == 1:
        xs, vs = sample_phase_space(lambda x: 1.0 + 0.4 * np.sin(2 * np.pi * x),
                                    lambda x: 0.3 * np.cos(2 * np.pi * x), tau=0.1, n=n)
    else:
        xs = rng.uniform(0.0, float(geom.period[0]), size=(n, 2))
        vs = rng.normal(0.0, 0.3, size=(n, 2))
    ens = ParticleEnsemble(positions=xs, velocities=vs, masses=np.full(n, 1.0 / n), geom=geom)

    name = mc["model"]
    lam = float(mc["coupling"])
    grid = int(mc["grid"])
    shape = grid if dim == 1 else (grid, grid)
    if name == "cucker_smale":
        model = CuckerSmale(coupling=lam, kernel=kernel)
    elif name == "motsch_tadmor":
        model = MotschTadmor(coupling=lam, kernel=kernel)
    elif name == "s_model":
        nodes = grid_nodes(shape, geom)
        s_vals = np.ones(nodes.shape[:dim] if dim == 2 else nodes.shape)
        model = SModel(coupling=lam, averaging=AveragingModel(variant="cs_mt", kernel=kernel),
                       strength=StrengthField(s_vals, geom))
    elif name == "w_model":
        rho0 = ens.density()

        def w0(points):
            from . import accel

            return 1.0 / accel.density_phi_points(points, rho0.points, rho0.masses, kernel, geom)

        model = WModel(coupling=lam, kernel=kernel, weight=WeightField.from_function(w0, shape, geom))
    else:
        raise ValueError(f"unknown micro model {name!r}")

    out = run(model, ens, float(mc["t_final"]), float(mc["dt"]),
              observe_every=int(mc["observe_every"]), record_trajectory=True)
    os.makedirs(cfg.outdir, exist_ok=True)

    traj_rows = []
    for t, snap in out.trajectory:
        for i in range(snap.n):
            x = np.atleast_1d(snap.positions[i])
            v = np.atleast_1d(snap.velocities[i])
            traj_rows.append((t, i, *x, *v, snap.masses[i]))
    coords = ["x"] if dim == 1 else ["x", "y"]
    vels = ["vx"] if dim == 1 else ["vx", "vy"]
    write_csv(os.path.join(cfg.outdir, "trajectory.csv"), traj_rows,
              header=["t", "i", *coords, *vels, "m"])

    diag_rows = []
    for t, d in zip(out.times, out.diagnostics):
        mom = np.atleast_1d(d["total_momentum"])
        diag_rows.append((t, d["velocity_diameter"], d["flock_diameter"],
                          d["max_speed"], *mom, d["J_running"]))
    mom_cols = ["momentum"] if dim == 1 else ["momentum_x", "momentum_y"]
    write_csv(os.path.join(cfg.outdir, "diagnostics.csv"), diag_rows,
              header=["t", "velocity_diameter", "flock_diameter", "max_speed",
                      *mom_cols, "J_running"])

    arrays = {"positions": out.ensemble.positions, "velocities": out.ensemble.velocities,
              "masses": out.ensemble.masses}
    field = getattr(out.model, "strength", None) or getattr(out.model, "weight", None)
    if field is not None:
        arrays["field"] = field.values
    write_checkpoint(os.path.join(cfg.outdir, "micro_final.ckpt"), arrays, geom,
                     out.times[-1])
    print(f"simulate-micro: {len(out.times)} observations -> {cfg.outdir}"
          + (" [ABORTED: " + out.abort_reason + "]" if out.aborted else ""))
    return 1 if out.aborted else 0


def _simulate_kinetic(cfg: RunConfig) -> int:
    kc = cfg.section("kinetic")
    geom = TorusGeometry(dim=1, period=1.0)
    kernel = build_kernel(cfg, geom)
    averaging = build_averaging(cfg, geom, kernel)
    nx, nv = int(kc["nx"]), int(kc["nv"])
    sigma = float(kc["sigma"])
    eps = float(kc["eps"])
    stepper_name = kc["stepper"]

    def rho0(x):
        return 1.0 + 0.3 * np.cos(2 * np.pi * x + 1.0)

    def u0(x):
        return 0.4 * np.sin(2 * np.pi * x)

    v_max = float(kc["v_max"]) or 6.0 * np.sqrt(max(sigma, 0.05)) + 0.5
    x = grid_nodes(nx, geom)
    common = dict(nx=nx, nv=nv, v_max=v_max, geom=geom, averaging=averaging,
                  lam=float(kc["coupling"]))
    if stepper_name == "fpa":
        w = WeightField(1.0 + float(kc["weight_variation"]) * np.cos(2 * np.pi * x), geom)
        state = maxwellian_state(rho0, u0, sigma_v=1.3 * sigma, weight=w, sigma=sigma, **common)
        stepper = fpa_step
    else:
        strength = StrengthField(np.ones(nx), geom)
        sig_v = sigma if stepper_name != "monokinetic" else (eps / 2.0) ** 2
        state = maxwellian_state(rho0, u0, sigma_v=sig_v, strength=strength,
                                 eps=eps, delta=eps * eps, **common)
        stepper = {"vlasov": vlasov_step, "monokinetic": monokinetic_step,
                   "maxwellian": maxwellian_step}[stepper_name]

    T = float(kc["t_final"])
    dt = 0.8 * state.dx / state.v_max
    if stepper_name == "vlasov":
        # explicit upwind drift carries its own CFL bound
        drift = float(kc["coupling"]) * (state.v_max + 1.0)
        dt = min(dt, 0.4 * state.dv / max(drift, 1e-12))
    n_steps = int(np.ceil(T / dt))
    dt = T / n_steps
    L = float(geom.period[0])
    rows = []
    every = max(n_steps // 100, 1)
    for k in range(n_steps):
        state = stepper(state, dt)
        if (k + 1) % every == 0 or k + 1 == n_steps:
            rho, mom, energy = moments(state)
            M = float(rho.sum() * state.dx)
            u, _ = bulk_velocity(rho, mom)
            ubar = float(mom.sum() * state.dx / M)
            ref = MaxwellianReference(rho=M / L, u=ubar, sigma=sigma if sigma > 0 else 1.0)
            h, h_eps, g_eps = relative_entropy(state, ref)
            rows.append((state.time, M, energy, modulated_energy(state, u), h, h_eps,
                         g_eps, fisher_information(state), ubar, momentum_drift(state)))
    os.makedirs(cfg.outdir, exist_ok=True)
    write_csv(os.path.join(cfg.outdir, "kinetic_diagnostics.csv"), rows,
              header=["t", "mass", "energy", "modulated_energy", "entropy", "h_eps",
                      "g_eps", "fisher", "ubar", "momentum_drift"])
    arrays = {"f": state.f}
    if state.strength is not None:
        arrays["strength"] = state.strength.values
    if state.weight is not None:
        arrays["weight"] = state.weight.values
    write_checkpoint(os.path.join(cfg.outdir, "kinetic_final.ckpt"), arrays, geom, state.time)
    svg_line_plot(os.path.join(cfg.outdir, "kinetic_entropy.svg"),
                  series={"H": (np.array([r[0] for r in rows]), np.array([r[4] for r in rows]))},
                  xlabel="t", ylabel="relative entropy", title="kinetic relaxation", logy=True)
    print(f"simulate-kinetic[{stepper_name}]: {n_steps} steps -> {cfg.outdir}")
    return 0


def _simulate_macro(cfg: RunConfig) -> int:
    mac = cfg.section("macro")
    nx = int(mac["nx"])
    geom = TorusGeometry(dim=1, period=1.0)
    kernel = build_kernel(cfg, geom)
    averaging = build_averaging(cfg, geom, kernel)
    x = grid_nodes(nx, geom)
    a = float(mac["amplitude"])
    state = MacroState(rho=1.0 + 0.2 * np.cos(2 * np.pi * x), s=np.ones(nx),
                       u=a * np.sin(2 * np.pi * x), geom=geom, averaging=averaging,
                       pressure="pressureless")
    state = run_macro(state, float(mac["t_final"]))
    e, _, _ = e_quantity(state)
    os.makedirs(cfg.outdir, exist_ok=True)
    rows = list(zip(x, state.rho, state.s, state.u, e))
    write_csv(os.path.join(cfg.outdir, "macro_state.csv"), rows,
              header=["x", "rho", "s", "u", "e"])
    write_checkpoint(os.path.join(cfg.outdir, "macro_final.ckpt"),
                     {"rho": state.rho, "s": state.s, "u": state.u}, geom, state.time)
    print(f"simulate-macro: t={state.time:g} -> {cfg.outdir}")
    return 0


def _spectral_gap(cfg: RunConfig) -> int:
    geom = TorusGeometry(dim=1, period=1.0)
    kernel = build_kernel(cfg, geom)
    nx = int(cfg.section("macro")["nx"])
    x = grid_nodes(nx, geom)
    rho = GridDensity(1.0 + 0.3 * np.cos(2 * np.pi * x + 1.0), geom)
    w = 1.0 + float(cfg.section("experiment")["weight_variation"]) * np.cos(2 * np.pi * x)
    gap = spectral_gap_estimate(kernel, rho, w)
    os.makedirs(cfg.outdir, exist_ok=True)
    write_csv(os.path.join(cfg.outdir, "spectral_gap.csv"), [(nx, gap)],
              header=["grid", "epsilon0"])
    print(f"spectral-gap: epsilon0 = {gap:.10g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="alignlab",
        description="multi-scale laboratory for alignment models with transported strength")
    parser.add_argument("command",
                        choices=sorted(EXPERIMENTS) + ["simulate-micro", "simulate-kinetic",
                                                       "simulate-macro", "spectral-gap"])
    parser.add_argument("--config", default=None, help="TOML run configuration")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = parser.parse_args(argv)

    cfg = load_config(args.config, seed=args.seed, outdir=args.out)
    try:
        if args.command in EXPERIMENTS:
            return _run_experiment(args.command, cfg)
        if args.command == "simulate-micro":
            return _simulate_micro(cfg)
        if args.command == "simulate-kinetic":
            return _simulate_kinetic(cfg)
        if args.command == "simulate-macro":
            return _simulate_macro(cfg)
        return _spectral_gap(cfg)
    except AlignlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
