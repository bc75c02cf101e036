"""Periodic geometry on the torus and communication kernels.

Everything downstream (particle forces, convolutions, transport) measures
distance through the minimal image convention: the displacement between two
points is reduced componentwise to (-period/2, period/2].  Kernel profiles are
radial, nonnegative and nonincreasing; a profile is evaluated at the minimal
image distance, not at a lattice sum of images (the decay of the profiles used
here makes the image sum negligible).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidGridError

__all__ = [
    "TorusGeometry",
    "CommunicationKernel",
    "Mollifier",
    "wrap_points",
    "periodic_displacement",
    "periodic_distance",
    "kernel_eval",
    "mollifier_eval",
    "bochner_square",
    "inverse_power_kernel",
    "constant_kernel",
    "tabulated_kernel",
    "cosine_kernel",
    "standard_bump",
]

# descriptor kinds consumed by the accelerated point-evaluation loops
KIND_CONSTANT = 0
KIND_INVERSE_POWER = 1
KIND_TABULATED = 2

_EMPTY = np.empty(0, dtype=np.float64)


@dataclass(frozen=True)
class TorusGeometry:
    """Flat torus T^n, n in {1, 2}, with a positive period per axis."""

    dim: int
    period: np.ndarray

    def __init__(self, dim: int = 1, period=1.0):
        if dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {dim}")
        p = np.broadcast_to(np.asarray(period, dtype=float), (dim,)).copy()
        if np.any(p <= 0):
            raise ValueError(f"period must be positive, got {p}")
        p.setflags(write=False)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "period", p)

    @property
    def half_diameter(self) -> float:
        """Largest minimal-image distance between two points."""
        return float(np.linalg.norm(self.period / 2.0))

    @property
    def volume(self) -> float:
        return float(np.prod(self.period))


def wrap_points(points: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """Map points into the fundamental domain [0, period) per axis."""
    pts = np.asarray(points, dtype=float)
    return np.mod(pts, geom.period if pts.ndim > 1 or geom.dim > 1 else geom.period[0])


def periodic_displacement(a, b, geom: TorusGeometry) -> np.ndarray:
    """Minimal-image displacement a - b, componentwise in (-period/2, period/2].

    Broadcasts over leading axes; the last axis is the spatial one for dim 2,
    while dim-1 inputs may be plain scalars or arrays.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = geom.period if geom.dim > 1 else geom.period[0]
    d = np.mod(a - b + 0.5 * p, p) - 0.5 * p
    # mod gives [-p/2, p/2); fold the single excluded endpoint
    return np.where(d == -0.5 * p, 0.5 * p, d)


def periodic_distance(a, b, geom: TorusGeometry) -> np.ndarray:
    """Minimal-image Euclidean distance on the torus.

    1d points are plain scalars/arrays (no trailing component axis); 2d
    points carry their components on the last axis.
    """
    d = periodic_displacement(a, b, geom)
    if geom.dim == 1:
        return np.abs(d)
    return np.sqrt(np.sum(d * d, axis=-1))


@dataclass(frozen=True)
class CommunicationKernel:
    """Radial communication profile phi(r) evaluated through torus distance.

    ``profile`` must accept numpy arrays of nonnegative radii.  ``c0`` is a
    known pointwise lower bound on the torus (0 when none is claimed);
    averaging models that divide by kernel sums require c0 > 0.

    ``descriptor`` packs the profile into (kind, param, table_r, table_v) so
    the jit-compiled point loops can evaluate it without calling back into
    Python; kernels built from arbitrary callables have no descriptor and are
    served by the vectorized numpy path instead.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    smoothness_order: int = 2
    c0: float = 0.0
    is_fat_tail: bool = False
    descriptor: Optional[tuple] = field(default=None, compare=False)

    def __call__(self, r):
        return self.profile(np.asarray(r, dtype=float))

    @property
    def at_zero(self) -> float:
        return float(self.profile(np.zeros(1))[0])


def kernel_eval(kernel: CommunicationKernel, a, b, geom: TorusGeometry) -> np.ndarray:
    """phi of the minimal-image distance between a and b."""
    return kernel.profile(periodic_distance(a, b, geom))


def inverse_power_kernel(
    exponent: float = 40.0, geom: Optional[TorusGeometry] = None
) -> CommunicationKernel:
    """phi(r) = (1 + r^2)^(-exponent).

    Strictly positive, so on a torus it has the lower bound
    phi(half_diameter); the bound is recorded when a geometry is supplied.
    """
    p = float(exponent)

    def profile(r):
        return (1.0 + np.asarray(r, dtype=float) ** 2) ** (-p)

    c0 = float(profile(np.array(geom.half_diameter))) if geom is not None else 0.0
    return CommunicationKernel(
        profile=profile,
        smoothness_order=100,
        c0=c0,
        is_fat_tail=False,
        descriptor=(KIND_INVERSE_POWER, p, _EMPTY, _EMPTY),
    )


def constant_kernel(value: float = 1.0) -> CommunicationKernel:
    """All-to-all kernel phi == value."""
    v = float(value)
    if v < 0:
        raise ValueError("kernel values must be nonnegative")

    def profile(r):
        return np.full_like(np.asarray(r, dtype=float), v)

    return CommunicationKernel(
        profile=profile,
        smoothness_order=100,
        c0=v,
        is_fat_tail=True,
        descriptor=(KIND_CONSTANT, v, _EMPTY, _EMPTY),
    )


def cosine_kernel(mean: float = 1.0, amplitude: float = 0.5, wavenumber: int = 1,
                  period: float = 1.0) -> CommunicationKernel:
    """phi(r) = mean + amplitude*cos(2*pi*wavenumber*r/period).

    Used in Fourier-oracle tests and as a Bochner factor; nonincreasing on
    [0, period/2] for one wavenumber, and bounded below by mean - |amplitude|.
    """
    if abs(amplitude) > mean:
        raise ValueError("cosine kernel would be negative")
    w = 2.0 * np.pi * wavenumber / period

    def profile(r):
        return mean + amplitude * np.cos(w * np.asarray(r, dtype=float))

    tab_r = np.linspace(0.0, period, 4097)
    return CommunicationKernel(
        profile=profile,
        smoothness_order=100,
        c0=mean - abs(amplitude),
        is_fat_tail=True,
        descriptor=(KIND_TABULATED, float(tab_r[1] - tab_r[0]), tab_r, profile(tab_r)),
    )


def tabulated_kernel(r_table: np.ndarray, values: np.ndarray,
                     smoothness_order: int = 2) -> CommunicationKernel:
    """Kernel from uniform samples (r_table, values), linearly interpolated.

    Radii beyond the table are clamped to the last sample.
    """
    r_table = np.ascontiguousarray(r_table, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    if r_table.ndim != 1 or r_table.shape != values.shape or r_table.size < 2:
        raise InvalidGridError("tabulated kernel needs matching 1d tables with >= 2 samples")
    dr = r_table[1] - r_table[0]
    if not np.allclose(np.diff(r_table), dr):
        raise InvalidGridError("tabulated kernel requires a uniform radius grid")
    if np.any(values < 0):
        raise ValueError("kernel values must be nonnegative")

    def profile(r):
        return np.interp(np.asarray(r, dtype=float), r_table, values)

    return CommunicationKernel(
        profile=profile,
        smoothness_order=smoothness_order,
        c0=float(values.min()),
        is_fat_tail=False,
        descriptor=(KIND_TABULATED, float(dr), r_table, values),
    )


def bochner_square(psi: CommunicationKernel, geom: TorusGeometry,
                   resolution: int = 1024) -> CommunicationKernel:
    """Periodic self-convolution phi = psi * psi, tabulated on the torus.

    Bochner-positive kernels drive the spectral-gap bound; the convolution is
    computed by FFT on a uniform grid (trapezoidal quadrature, exact below the
    Nyquist mode) and returned as an interpolated radial profile.  Only the
    1d torus is supported: every Bochner-kernel use in this package is 1d.
    """
    if resolution < 4:
        raise InvalidGridError(f"bochner_square needs resolution >= 4, got {resolution}")
    if geom.dim != 1:
        raise InvalidGridError("bochner_square is implemented for 1d tori only")
    L = float(geom.period[0])
    h = L / resolution
    x = np.arange(resolution) * h
    samples = psi.profile(np.minimum(x, L - x))
    if np.any(samples < 0) or samples.min() <= 0:
        raise ValueError("bochner factor psi must be strictly positive")
    conv = np.fft.irfft(np.fft.rfft(samples) ** 2, n=resolution) * h
    # radial table on [0, L/2]; conv is even so one half suffices
    half = resolution // 2
    r_table = x[: half + 1]
    values = np.maximum(conv[: half + 1], 0.0)
    kernel = tabulated_kernel(r_table, values, smoothness_order=psi.smoothness_order)
    lower = float(samples.min() ** 2 * L)
    return CommunicationKernel(
        profile=kernel.profile,
        smoothness_order=psi.smoothness_order,
        c0=max(kernel.c0, lower),
        is_fat_tail=True,
        descriptor=kernel.descriptor,
    )


def _bump(z: np.ndarray) -> np.ndarray:
    """Unnormalized smooth bump exp(-1/(1-z^2)) on (-1, 1), zero outside."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    out[inside] = np.exp(-1.0 / (1.0 - zi * zi))
    return out


# 1d normalization of the standard bump, fixed once by fine trapezoidal
# quadrature (the integrand vanishes to all orders at the endpoints, so the
# rule is spectrally accurate here)
_BUMP_GRID = np.linspace(-1.0, 1.0, 8193)
_BUMP_NORM = float(np.trapezoid(_bump(_BUMP_GRID), _BUMP_GRID))


def standard_bump(z) -> np.ndarray:
    """C-infinity bump supported on [-1, 1] with unit integral (1d)."""
    return _bump(z) / _BUMP_NORM


@dataclass(frozen=True)
class Mollifier:
    """Scaled bump Psi_delta(x) = delta^{-n} Psi(x/delta) on the torus.

    The base profile is the standard compactly supported bump applied per
    axis (tensor product in 2d).  Pointwise evaluation goes through the
    minimal image; convolutions use the Fourier multiplier of the bump so
    that scales below the grid spacing degrade gracefully to the identity.
    """

    delta: float
    geom: TorusGeometry

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"mollifier scale must be positive, got {self.delta}")
        if self.delta > self.geom.period.min() / 2:
            raise ValueError("mollifier support exceeds the fundamental domain")

    def __call__(self, x) -> np.ndarray:
        return mollifier_eval(self, x)

    def fourier_multiplier(self, k: np.ndarray) -> np.ndarray:
        """Psi_delta-hat at angular wavenumbers k (1d), normalized to 1 at k=0."""
        kd = np.abs(np.asarray(k, dtype=float)) * self.delta
        vals = np.cos(np.outer(kd.ravel(), _BUMP_GRID))
        mult = np.trapezoid(vals * standard_bump(_BUMP_GRID), _BUMP_GRID)
        return mult.reshape(np.shape(k))


def mollifier_eval(m: Mollifier, x) -> np.ndarray:
    """Value of Psi_delta at displacement x from the origin (minimal image)."""
    g = m.geom
    d = periodic_displacement(np.asarray(x, dtype=float), 0.0, g)
    if g.dim == 1:
        return standard_bump(d / m.delta) / m.delta
    out = standard_bump(d[..., 0] / m.delta) / m.delta
    for axis in range(1, g.dim):
        out = out * standard_bump(d[..., axis] / m.delta) / m.delta
    return out
