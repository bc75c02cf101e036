"""Discrete-continuous microscopic alignment dynamics.

N agents carry positions on the torus and velocities in R^n; their
acceleration relaxes each velocity toward an averaged velocity field with a
model-dependent strength:

    cucker_smale   a_i = lambda * sum_j m_j phi(|x_i-x_j|) (v_j - v_i)
    motsch_tadmor  a_i = lambda / (sum_j m_j phi_ij) * sum_j m_j phi_ij (v_j - v_i)
    s_model        a_i = lambda * s(x_i) ([u]_rho(x_i) - v_i), s a transported field
    w_model        a_i = lambda * w(x_i) * sum_j m_j phi_ij (v_j - v_i), w transported

The field-coupled variants advance their continuum field and the particle ODE
by Strang splitting: half a field step with the averaged velocity evaluated on
the grid from the current ensemble, a full RK4 particle step against the
frozen field, half a field step from the updated ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from . import accel
from .averaging import AveragingModel, EmpiricalDensity, EmpiricalMomentum, velocity_average
from .errors import DivisionHazardError, StepRejectedError
from .fields import StrengthField, WeightField, advance_strength, advance_weight, sample_field
from .gridops import grid_nodes
from .torus import CommunicationKernel, TorusGeometry, periodic_distance, wrap_points

__all__ = [
    "ParticleEnsemble",
    "CuckerSmale",
    "MotschTadmor",
    "SModel",
    "WModel",
    "acceleration",
    "step",
    "run",
    "diagnostics",
    "admissible_dt",
    "MicroRun",
]

_DENOM_FLOOR = 1e-14


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions (wrapped), velocities and positive masses of N agents."""

    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    geom: TorusGeometry

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.positions, dtype=float))
        v = np.atleast_1d(np.asarray(self.velocities, dtype=float))
        m = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if np.any(m <= 0):
            raise ValueError("particle masses must be positive")
        if x.shape != v.shape:
            raise ValueError("positions and velocities must have matching shapes")
        object.__setattr__(self, "positions", wrap_points(x, self.geom))
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "masses", m)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def density(self) -> EmpiricalDensity:
        return EmpiricalDensity(points=self.positions, masses=self.masses, geom=self.geom)

    def speeds(self) -> np.ndarray:
        v = self.velocities
        return np.abs(v) if v.ndim == 1 else np.linalg.norm(v, axis=-1)


@dataclass(frozen=True)
class CuckerSmale:
    coupling: float
    kernel: CommunicationKernel


@dataclass(frozen=True)
class MotschTadmor:
    coupling: float
    kernel: CommunicationKernel


@dataclass(frozen=True)
class SModel:
    """Alignment with a strength field transported conservatively along [u]_rho."""

    coupling: float
    averaging: AveragingModel
    strength: StrengthField


@dataclass(frozen=True)
class WModel:
    """Favre-averaged alignment with a purely transported weight, s = w rho_phi."""

    coupling: float
    kernel: CommunicationKernel
    weight: WeightField


MicroModel = Union[CuckerSmale, MotschTadmor, SModel, WModel]


def _field_of(model):
    if isinstance(model, SModel):
        return model.strength
    if isinstance(model, WModel):
        return model.weight
    return None


def acceleration(model: MicroModel, ensemble: ParticleEnsemble) -> np.ndarray:
    """Right-hand side of the velocity equation for every particle."""
    x, v, m, geom = ensemble.positions, ensemble.velocities, ensemble.masses, ensemble.geom

    if isinstance(model, CuckerSmale):
        return accel.pairwise_alignment(x, v, m, model.kernel, geom) * model.coupling

    if isinstance(model, MotschTadmor):
        den = accel.density_phi_points(x, x, m, model.kernel, geom)
        _guard_denominator(den)
        raw = accel.pairwise_alignment(x, v, m, model.kernel, geom)
        scale = model.coupling / den
        return raw * (scale if raw.ndim == 1 else scale[:, None])

    if isinstance(model, WModel):
        w_at = sample_field(model.weight, x)
        return accel.pairwise_alignment(x, v, m, model.kernel, geom, weights=w_at) * model.coupling

    # s-model: lambda * s(x_i) ([u]_rho(x_i) - v_i)
    s_at = sample_field(model.strength, x)
    uavg = _velocity_average_at(model.averaging, ensemble, x)
    rel = uavg - v
    return model.coupling * (rel * (s_at if rel.ndim == 1 else s_at[:, None]))


def _guard_denominator(den: np.ndarray) -> None:
    bad = np.nonzero(den <= _DENOM_FLOOR)[0]
    if bad.size:
        raise DivisionHazardError(
            f"normalizing kernel sum vanished at particle index {int(bad[0])}; "
            "use a kernel with c0 > 0")


def _velocity_average_at(averaging: AveragingModel, ensemble: ParticleEnsemble, points):
    """[u^N]_{rho^N} at arbitrary points; fast path for the Favre families."""
    if averaging.variant in ("cs_mt", "favre"):
        num, den = accel.favre_points(points, ensemble.positions, ensemble.velocities,
                                      ensemble.masses, averaging.kernel, ensemble.geom)
        _guard_denominator(np.atleast_1d(den))
        return num / (den[:, None] if np.ndim(num) > 1 else den)
    return velocity_average(averaging, ensemble.density(),
                            EmpiricalMomentum(ensemble.velocities), points)


def _grid_velocity(model, ensemble: ParticleEnsemble):
    """Averaged velocity on the field grid from the particle data.

    Returns (velocity, rho_phi at the grid nodes or None); the denominator is
    reused by the w-model stability bound.
    """
    field = _field_of(model)
    nodes = grid_nodes(field.values.shape, field.geom)
    pts = nodes if field.geom.dim == 1 else nodes.reshape(-1, 2)
    den = None
    if isinstance(model, WModel) or model.averaging.variant in ("cs_mt", "favre"):
        kernel = model.kernel if isinstance(model, WModel) else model.averaging.kernel
        num, den = accel.favre_points(pts, ensemble.positions, ensemble.velocities,
                                      ensemble.masses, kernel, ensemble.geom)
        _guard_denominator(np.atleast_1d(den))
        out = num / (den[:, None] if np.ndim(num) > 1 else den)
    else:
        out = _velocity_average_at(model.averaging, ensemble, pts)
    if field.geom.dim == 2:
        out = out.reshape(field.values.shape + (2,))
    return out, den


def _max_strength(model, ensemble, rho_phi_grid=None) -> float:
    if isinstance(model, CuckerSmale):
        den = accel.density_phi_points(ensemble.positions, ensemble.positions,
                                       ensemble.masses, model.kernel, ensemble.geom)
        return float(np.max(den))
    if isinstance(model, MotschTadmor):
        return 1.0
    if isinstance(model, SModel):
        return float(np.max(model.strength.values))
    # w-model: the effective strength is the pointwise product w * rho_phi
    # (w alone can be huge where rho_phi is tiny, e.g. w0 = 1/rho_phi)
    field = model.weight
    if rho_phi_grid is None:
        nodes = grid_nodes(field.values.shape, field.geom)
        pts = nodes if field.geom.dim == 1 else nodes.reshape(-1, 2)
        rho_phi_grid = accel.density_phi_points(pts, ensemble.positions, ensemble.masses,
                                                model.kernel, ensemble.geom)
    den_part = accel.density_phi_points(ensemble.positions, ensemble.positions,
                                        ensemble.masses, model.kernel, ensemble.geom)
    w_part = sample_field(field, ensemble.positions)
    return float(max(np.max(field.values.reshape(-1) * rho_phi_grid),
                     np.max(w_part * den_part)))


def _field_cfl(field, vel) -> float:
    bound = np.inf
    h = field.cell_width
    speeds = [float(np.max(np.abs(vel)))] if field.geom.dim == 1 else [
        float(np.max(np.abs(vel[..., a]))) for a in range(2)]
    for ha, vmax in zip(h, speeds):
        if vmax > 0:
            bound = min(bound, ha / vmax)  # half steps: dt/2 <= 0.5 h / vmax
    return bound


def admissible_dt(model: MicroModel, ensemble: ParticleEnsemble) -> float:
    """Largest step honoring the particle bound 0.1/(lambda max s) and field CFL."""
    field = _field_of(model)
    vel = den = None
    if field is not None:
        vel, den = _grid_velocity(model, ensemble)
    s_max = _max_strength(model, ensemble, rho_phi_grid=den)
    bound = np.inf if s_max == 0 else 0.1 / (model.coupling * s_max)
    if field is not None:
        bound = min(bound, _field_cfl(field, vel))
    return float(bound)


def _rk4(model, ensemble: ParticleEnsemble, dt: float) -> ParticleEnsemble:
    """Classical RK4 on (x, v) with the continuum field frozen."""

    def rhs(x, v):
        e = replace(ensemble, positions=wrap_points(x, ensemble.geom), velocities=v)
        return v, acceleration(model, e)

    x0, v0 = ensemble.positions, ensemble.velocities
    k1x, k1v = rhs(x0, v0)
    k2x, k2v = rhs(x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v)
    k3x, k3v = rhs(x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v)
    k4x, k4v = rhs(x0 + dt * k3x, v0 + dt * k3v)
    x1 = x0 + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    v1 = v0 + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return replace(ensemble, positions=wrap_points(x1, ensemble.geom), velocities=v1)


def step(model: MicroModel, ensemble: ParticleEnsemble, dt: float):
    """One Strang-split step; returns (ensemble, model with advanced field)."""
    field = _field_of(model)
    if field is None:
        bound = 0.1 / (model.coupling * max(_max_strength(model, ensemble), 1e-300))
        if dt > bound * (1.0 + 1e-12):
            raise StepRejectedError("micro step too large", admissible_dt=bound)
        return _rk4(model, ensemble, dt), model

    vel, den = _grid_velocity(model, ensemble)
    s_max = _max_strength(model, ensemble, rho_phi_grid=den)
    bound = min(0.1 / (model.coupling * max(s_max, 1e-300)), _field_cfl(field, vel))
    if dt > bound * (1.0 + 1e-12):
        raise StepRejectedError("micro step too large", admissible_dt=bound)

    if isinstance(model, SModel):
        model = replace(model, strength=advance_strength(model.strength, vel, 0.5 * dt))
    else:
        model = replace(model, weight=advance_weight(model.weight, vel, 0.5 * dt))

    ensemble = _rk4(model, ensemble, dt)

    vel, _ = _grid_velocity(model, ensemble)
    if isinstance(model, SModel):
        model = replace(model, strength=advance_strength(model.strength, vel, 0.5 * dt))
    else:
        model = replace(model, weight=advance_weight(model.weight, vel, 0.5 * dt))
    return ensemble, model


def diagnostics(ensemble: ParticleEnsemble, j_running: float = 0.0) -> dict:
    """Velocity/flock diameters, max speed, total momentum, running J."""
    v = ensemble.velocities
    x = ensemble.positions
    n = ensemble.n
    vd = 0.0
    fd = 0.0
    chunk = 512
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dv = v[lo:hi, None] - v[None, :]
        dvn = np.abs(dv) if v.ndim == 1 else np.linalg.norm(dv, axis=-1)
        vd = max(vd, float(dvn.max()))
        fd = max(fd, float(periodic_distance(x[lo:hi, None], x[None, :], ensemble.geom).max()))
    speeds = ensemble.speeds()
    momentum = (ensemble.masses * v if v.ndim == 1 else ensemble.masses[:, None] * v).sum(axis=0)
    j_now = float(np.sum(ensemble.masses * speeds))
    return {
        "velocity_diameter": vd,
        "flock_diameter": fd,
        "max_speed": float(speeds.max()),
        "total_momentum": momentum if np.ndim(momentum) else float(momentum),
        "J_running": max(j_running, j_now),
    }


@dataclass
class MicroRun:
    times: list
    diagnostics: list
    trajectory: Optional[list]
    ensemble: ParticleEnsemble
    model: MicroModel
    aborted: bool = False
    abort_reason: str = ""


def run(model: MicroModel, ensemble: ParticleEnsemble, T: float, dt: float,
        observe_every: int = 1, record_trajectory: bool = False,
        adaptive: bool = False) -> MicroRun:
    """Integrate to time T, observing diagnostics every ``observe_every`` steps.

    With ``adaptive`` the step shrinks to 90% of the admissible bound when
    the requested dt exceeds it (still deterministic).  Step errors abort the
    run; partial results are returned with the aborted flag set.
    """
    times = [0.0]
    diag0 = diagnostics(ensemble)
    diags = [diag0]
    traj = [(0.0, ensemble)] if record_trajectory else None
    j_run = diag0["J_running"]
    t = 0.0
    k = 0
    while t < T - 1e-12:
        step_dt = min(dt, T - t)
        if adaptive:
            step_dt = min(step_dt, 0.9 * admissible_dt(model, ensemble))
        try:
            ensemble, model = step(model, ensemble, step_dt)
        except (StepRejectedError, DivisionHazardError) as exc:
            return MicroRun(times, diags, traj, ensemble, model, aborted=True,
                            abort_reason=str(exc))
        t += step_dt
        k += 1
        if k % observe_every == 0 or t >= T - 1e-12:
            d = diagnostics(ensemble, j_running=j_run)
            j_run = d["J_running"]
            times.append(t)
            diags.append(d)
            if record_trajectory:
                traj.append((t, ensemble))
    return MicroRun(times, diags, traj, ensemble, model)
