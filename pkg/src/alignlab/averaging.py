"""Environmental averaging operators [u]_rho with integral representation.

The averaging acts on a velocity field through a density-dependent kernel,
    [u]_rho(x) = integral Phi_rho(x, y) u(y) rho(y) dy,
and is right stochastic: integral Phi_rho(x, y) rho(y) dy = 1, so constants
are fixed points.  Four kernel families are provided:

    cs_mt        Phi = phi(x - y) / rho_phi(x)          (Favre quotient)
    favre        same kernel, grid evaluation by convolution quotient
    mphi        Phi = integral phi(x-z) phi(y-z) / rho_phi(z) dz, phi a mollifier
    segregation Phi = sum_l g_l(x) g_l(y) / integral g_l rho

plus the special double-mollified velocity used by the stiff local-alignment
penalization, and a spectral-gap estimator for the weighted quadratic form
(u, [u]_rho) over zero-mean fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import accel
from .errors import DivisionHazardError, InvalidGridError, IterationLimitError
from .gridops import cell_widths, grid_nodes, kernel_grid_samples, mollifier_convolve, periodic_convolve
from .torus import CommunicationKernel, Mollifier, TorusGeometry, kernel_eval

__all__ = [
    "EmpiricalDensity",
    "GridDensity",
    "EmpiricalMomentum",
    "GridMomentum",
    "AveragingModel",
    "kernel_matrix",
    "velocity_average",
    "favre_average",
    "special_mollified_velocity",
    "spectral_gap_estimate",
    "check_right_stochastic",
]

VACUUM_THRESHOLD = 1e-14


@dataclass(frozen=True)
class EmpiricalDensity:
    """rho = sum_j m_j delta_{x_j} on the torus."""

    points: np.ndarray
    masses: np.ndarray
    geom: TorusGeometry

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_1d(np.asarray(self.points, dtype=float)))
        object.__setattr__(self, "masses", np.atleast_1d(np.asarray(self.masses, dtype=float)))
        if np.any(self.masses <= 0):
            raise ValueError("empirical masses must be positive")

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative samples on a uniform periodic grid; mass is the Riemann sum."""

    values: np.ndarray
    geom: TorusGeometry

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0):
            raise ValueError("grid density must be nonnegative")
        if v.ndim != self.geom.dim:
            raise InvalidGridError("grid rank does not match geometry")
        object.__setattr__(self, "values", v)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(cell_widths(self.values.shape, self.geom)))

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    @property
    def nodes(self):
        return grid_nodes(self.values.shape, self.geom)


Density = Union[EmpiricalDensity, GridDensity]


@dataclass(frozen=True)
class EmpiricalMomentum:
    """Velocities carried by the atoms of an EmpiricalDensity."""

    velocities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "velocities",
                           np.atleast_1d(np.asarray(self.velocities, dtype=float)))


@dataclass(frozen=True)
class GridMomentum:
    """Momentum samples (u * rho) on the density's grid; last axis = component in 2d."""

    values: np.ndarray


Momentum = Union[EmpiricalMomentum, GridMomentum]


def momentum_l1(rho: Density, momentum: Momentum) -> float:
    """integral |u| rho dx, the quantity whose running sup bounds the averaging."""
    if isinstance(rho, EmpiricalDensity):
        v = momentum.velocities
        speed = np.abs(v) if v.ndim == 1 else np.linalg.norm(v, axis=-1)
        return float(np.sum(rho.masses * speed))
    m = momentum.values
    mag = np.abs(m) if m.ndim == rho.values.ndim else np.linalg.norm(m, axis=-1)
    return float(mag.sum() * rho.cell_volume)


@dataclass(frozen=True)
class AveragingModel:
    """Selection of the averaging kernel family plus its ingredients."""

    variant: str  # "cs_mt" | "favre" | "mphi" | "segregation"
    kernel: Optional[CommunicationKernel] = None
    mollifier: Optional[Mollifier] = None
    segregation_pieces: Optional[Sequence] = None  # callables or grid tables

    def __post_init__(self):
        if self.variant in ("cs_mt", "favre"):
            if self.kernel is None:
                raise ValueError(f"{self.variant} averaging needs a kernel")
        elif self.variant == "mphi":
            if self.mollifier is None:
                raise ValueError("mphi averaging needs a mollifier")
        elif self.variant == "segregation":
            if not self.segregation_pieces:
                raise ValueError("segregation averaging needs partition pieces")
        else:
            raise ValueError(f"unknown averaging variant {self.variant!r}")


def _density_phi_at(points, rho: Density, kernel) -> np.ndarray:
    """rho_phi at arbitrary points, by direct sums or grid quadrature."""
    if isinstance(rho, EmpiricalDensity):
        return accel.density_phi_points(points, rho.points, rho.masses, kernel, rho.geom)
    nodes = rho.nodes
    src = nodes.reshape(-1) if rho.geom.dim == 1 else nodes.reshape(-1, 2)
    masses = rho.values.reshape(-1) * rho.cell_volume
    return accel.density_phi_points(points, src, masses, kernel, rho.geom)


def _check_denominator(den: np.ndarray, what: str):
    bad = np.nonzero(den <= VACUUM_THRESHOLD)[0]
    if bad.size:
        raise DivisionHazardError(
            f"{what} vanished (<= {VACUUM_THRESHOLD}) at evaluation point index {int(bad[0])}")


def _segregation_values(pieces, points, geom):
    """g_l evaluated at points; pieces are callables or grids on the torus."""
    out = []
    for g in pieces:
        if callable(g):
            out.append(np.asarray(g(points), dtype=float))
        else:
            from .gridops import periodic_interp

            out.append(periodic_interp(np.asarray(g, dtype=float), points, geom))
    return np.stack(out, axis=0)


def _sources(rho: Density):
    """(source points, source masses) view of either density representation."""
    if isinstance(rho, EmpiricalDensity):
        return rho.points, rho.masses
    nodes = rho.nodes
    src = nodes.reshape(-1) if rho.geom.dim == 1 else nodes.reshape(-1, 2)
    return src, rho.values.reshape(-1) * rho.cell_volume


def kernel_matrix(model: AveragingModel, rho: Density, eval_points,
                  source_points=None) -> np.ndarray:
    """Phi_rho(x, y) for x in eval_points and y in source_points.

    source_points defaults to the support of rho.  Right stochasticity holds
    against the source masses: sum_y Phi(x, y) mass_y = 1.
    """
    geom = rho.geom
    eval_points = np.asarray(eval_points, dtype=float)
    if source_points is None:
        source_points, _ = _sources(rho)
    source_points = np.asarray(source_points, dtype=float)

    if model.variant in ("cs_mt", "favre"):
        k = model.kernel
        rho_phi = _density_phi_at(eval_points, rho, k)
        _check_denominator(rho_phi, "rho_phi")
        phi = kernel_eval(k, _ecol(eval_points, geom), _erow(source_points, geom), geom)
        return phi / rho_phi[:, None]

    if model.variant == "segregation":
        ge = _segregation_values(model.segregation_pieces, eval_points, geom)  # (L, P)
        gs = _segregation_values(model.segregation_pieces, source_points, geom)  # (L, Q)
        src_pts, src_m = _sources(rho)
        g_at_src = _segregation_values(model.segregation_pieces, src_pts, geom)
        denom = g_at_src @ src_m  # integral g_l rho
        _check_denominator(denom, "segregation piece mass")
        return np.einsum("lp,lq->pq", ge / denom[:, None], gs)

    # mphi: inner integral over z on a doubled-resolution quadrature grid.
    # Rows are rescaled so the discrete kernel is exactly right stochastic
    # (the continuum kernel is; the rescaling divides by the quadrature of
    # integral Psi_delta, a 1 + O(quadrature) factor).
    moll = model.mollifier
    mk = _mollifier_as_kernel(moll)
    fine = _mphi_quadrature_grid(rho)
    rho_psi = _density_phi_at(fine, rho, mk)
    _check_denominator(rho_psi, "rho_Psi")
    psi_ez = kernel_eval(mk, _ecol(eval_points, geom), _erow(fine, geom), geom)
    psi_sz = kernel_eval(mk, _ecol(source_points, geom), _erow(fine, geom), geom)
    w = _mphi_quadrature_weight(rho)
    Phi = (psi_ez / rho_psi[None, :]) @ psi_sz.T * w
    # sum_y Phi(x, y) rho(y) dy collapses algebraically to w * sum_z Psi(x - z)
    row_mass = w * psi_ez.sum(axis=1)
    _check_denominator(row_mass, "mphi row quadrature")
    return Phi / row_mass[:, None]


def _ecol(points, geom):
    points = np.asarray(points, dtype=float)
    return points[:, None] if geom.dim == 1 else points[:, None, :]


def _erow(points, geom):
    points = np.asarray(points, dtype=float)
    return points[None, :] if geom.dim == 1 else points[None, :, :]


def _mphi_quadrature_grid(rho: Density):
    geom = rho.geom
    if geom.dim != 1:
        raise InvalidGridError("mphi kernel matrices are supported on 1d tori")
    n = 2 * (rho.values.shape[0] if isinstance(rho, GridDensity) else max(rho.points.shape[0], 64))
    return grid_nodes(n, geom)


def _mphi_quadrature_weight(rho: Density) -> float:
    geom = rho.geom
    n = 2 * (rho.values.shape[0] if isinstance(rho, GridDensity) else max(rho.points.shape[0], 64))
    return float(geom.period[0]) / n


def _mollifier_as_kernel(moll: Mollifier) -> CommunicationKernel:
    """Wrap Psi_delta as a radial kernel (exact closed form, numpy path)."""
    from .torus import standard_bump

    delta = moll.delta

    def profile(r):
        return standard_bump(np.asarray(r, dtype=float) / delta) / delta

    return CommunicationKernel(profile=profile, smoothness_order=100, c0=0.0)


def velocity_average(model: AveragingModel, rho: Density, momentum: Momentum,
                     eval_points) -> np.ndarray:
    """[u]_rho at the evaluation points.

    For empirical data this is sum_j m_j Phi_rho(x, x_j) v_j; for grid data
    the quadrature analogue.  Constants are reproduced exactly up to the
    quadrature of the right-stochasticity identity.
    """
    geom = rho.geom
    eval_points = np.asarray(eval_points, dtype=float)

    if model.variant in ("cs_mt", "favre"):
        if isinstance(rho, EmpiricalDensity):
            num, den = accel.favre_points(eval_points, rho.points, momentum.velocities,
                                          rho.masses, model.kernel, geom)
        else:
            src, masses = _sources(rho)
            u = _grid_velocity(rho, momentum)
            num, den = accel.favre_points(eval_points, src, u.reshape(masses.shape + u.shape[rho.values.ndim:]),
                                          masses, model.kernel, geom)
        _check_denominator(np.atleast_1d(den), "rho_phi")
        return num / (den[..., None] if np.ndim(num) > np.ndim(den) else den)

    src, masses = _sources(rho)
    if isinstance(rho, EmpiricalDensity):
        vel = momentum.velocities
    else:
        u = _grid_velocity(rho, momentum)
        vel = u.reshape(masses.shape + u.shape[rho.values.ndim:])
    Phi = kernel_matrix(model, rho, eval_points, src)
    weighted = Phi * masses[None, :]
    return weighted @ vel


def _grid_velocity(rho: GridDensity, momentum: GridMomentum) -> np.ndarray:
    """u = momentum / rho where rho is positive; zero on vacuum cells."""
    m = momentum.values
    r = rho.values if m.ndim == rho.values.ndim else rho.values[..., None]
    return np.where(r > VACUUM_THRESHOLD, m / np.where(r > VACUUM_THRESHOLD, r, 1.0), 0.0)


def favre_average(kernel: CommunicationKernel, rho: GridDensity,
                  momentum: GridMomentum) -> np.ndarray:
    """u_F = (u rho)_phi / rho_phi by periodic convolution quadrature."""
    geom = rho.geom
    samples = kernel_grid_samples(kernel, rho.values.shape, geom)
    den = periodic_convolve(rho.values, samples, geom)
    _check_denominator(den.reshape(-1), "rho_phi")
    m = momentum.values
    if m.ndim == rho.values.ndim:
        return periodic_convolve(m, samples, geom) / den
    comps = [periodic_convolve(m[..., a], samples, geom) / den for a in range(m.shape[-1])]
    return np.stack(comps, axis=-1)


def special_mollified_velocity(rho: GridDensity, momentum: GridMomentum,
                               mollifier: Mollifier) -> np.ndarray:
    """u_delta = ((u rho)_Psi / rho_Psi)_Psi, the double-mollified Favre field."""
    den = mollifier_convolve(rho.values, mollifier)
    _check_denominator(den.reshape(-1), "rho_Psi")
    m = momentum.values
    if m.ndim == rho.values.ndim:
        return mollifier_convolve(mollifier_convolve(m, mollifier) / den, mollifier)
    comps = [mollifier_convolve(mollifier_convolve(m[..., a], mollifier) / den, mollifier)
             for a in range(m.shape[-1])]
    return np.stack(comps, axis=-1)


def check_right_stochastic(model: AveragingModel, rho: Density, eval_points=None) -> float:
    """max_x | sum_y Phi_rho(x, y) mass_y - 1 |."""
    src, masses = _sources(rho)
    if eval_points is None:
        eval_points = src
    Phi = kernel_matrix(model, rho, eval_points, src)
    return float(np.max(np.abs(Phi @ masses - 1.0)))


def spectral_gap_estimate(kernel: CommunicationKernel, rho: GridDensity,
                          w: np.ndarray, tol: float = 1e-8,
                          max_iter: int = 100000) -> float:
    """1 - lambda_max of the symmetrized weighted averaging on zero-mean fields.

    The quadratic form (u, [u]_rho) weighted by kappa = w * rho_phi * rho is
    maximized over { u : sum kappa u = 0, ||u||_{L2(kappa)} = 1 } by projected
    power iteration on the symmetric part of the similarity-transformed
    operator (quadratic forms only see the symmetric part).  Convergence is
    declared at relative tolerance ``tol`` on the Rayleigh quotient.
    """
    geom = rho.geom
    if geom.dim != 1:
        raise InvalidGridError("spectral gap estimation is implemented on 1d tori")
    vals = rho.values
    G = vals.shape[0]
    h = float(cell_widths(G, geom)[0])
    w = np.broadcast_to(np.asarray(w, dtype=float), (G,))
    samples = kernel_grid_samples(kernel, G, geom)
    rho_phi = periodic_convolve(vals, samples, geom)
    kappa = w * rho_phi * vals * h
    if np.any(kappa <= VACUUM_THRESHOLD):
        raise DivisionHazardError("kappa = w * rho_phi * rho must be strictly positive")

    # A u = [u]_rho  (Favre), entries phi(x_i - x_j) rho_j h / rho_phi(x_i)
    nodes = grid_nodes(G, geom)
    phi = kernel_eval(kernel, nodes[:, None], nodes[None, :], geom)
    A = phi * (vals * h)[None, :] / rho_phi[:, None]
    sq = np.sqrt(kappa)
    B = (sq[:, None] * A) / sq[None, :]
    Bs = 0.5 * (B + B.T)
    z = sq / np.linalg.norm(sq)  # zero-kappa-mean constraint direction

    rng = np.random.default_rng(12345)
    block = min(4, G - 1)

    def power(mat, shift: float, iters: int, target: float):
        """Projected block power iteration with Rayleigh-Ritz extraction.

        Returns (top Ritz value, its residual).  |Rayleigh - eigenvalue| <=
        residual holds unconditionally for symmetric operators, and the block
        rides through clustered top eigenvalues that stall a single vector.
        """
        Y = rng.standard_normal((G, block))
        Y -= np.outer(z, z @ Y)
        Y, _ = np.linalg.qr(Y)
        lam, residual = 0.0, np.inf
        for _ in range(iters):
            BY = mat @ Y
            BY -= np.outer(z, z @ BY)
            small = Y.T @ BY
            small = 0.5 * (small + small.T)
            evals, evecs = np.linalg.eigh(small)
            lam = float(evals[-1])
            top = Y @ evecs[:, -1]
            r = BY @ evecs[:, -1] - lam * top
            residual = float(np.linalg.norm(r))
            if residual <= target * max(1.0, abs(lam)):
                return lam, residual
            Y = BY + shift * Y
            Y -= np.outer(z, z @ Y)
            Y, R = np.linalg.qr(Y)
            if np.min(np.abs(np.diag(R))) <= 1e-300:
                return lam, 0.0  # block collapsed: operator annihilates the subspace
        return lam, residual

    gersh = float(np.max(np.sum(np.abs(Bs), axis=1)))
    # crude bottom-of-spectrum estimate so the production shift stays small
    # (a large shift flattens the convergence ratio of power iteration)
    lam_min = -power(-Bs, gersh, 200, 1e-3)[0]
    shift = max(0.0, -lam_min) + 1e-3 * max(1.0, gersh)
    lam, residual = power(Bs, shift, max_iter, tol)
    if residual <= tol * max(1.0, abs(lam)):
        return 1.0 - lam
    raise IterationLimitError("spectral gap power iteration did not converge",
                              residual=residual)
