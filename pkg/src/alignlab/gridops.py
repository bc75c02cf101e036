"""Uniform periodic grids: convolution, interpolation, spectral derivatives.

Grids are node-based without a duplicated endpoint: a 1d grid of G cells on a
period-L torus has nodes x_i = i*L/G, and the plain Riemann sum h*sum equals
the trapezoidal rule there (exact for trigonometric polynomials below the
Nyquist mode).
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidGridError
from .torus import Mollifier, TorusGeometry

__all__ = [
    "grid_nodes",
    "cell_widths",
    "kernel_grid_samples",
    "periodic_convolve",
    "mollifier_convolve",
    "periodic_interp",
    "spectral_derivative",
]


def cell_widths(shape, geom: TorusGeometry) -> np.ndarray:
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    if len(shape) != geom.dim:
        raise InvalidGridError(f"grid rank {len(shape)} != torus dim {geom.dim}")
    return geom.period / np.asarray(shape, dtype=float)


def grid_nodes(shape, geom: TorusGeometry):
    """Node coordinates; (G,) in 1d, a (Gx,Gy,2) stack in 2d."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    h = cell_widths(shape, geom)
    axes = [np.arange(g) * h[a] for a, g in enumerate(shape)]
    if geom.dim == 1:
        return axes[0]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def kernel_grid_samples(kernel, shape, geom: TorusGeometry) -> np.ndarray:
    """phi(|x|) sampled at grid displacements from the origin."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    h = cell_widths(shape, geom)
    axes = []
    for a, g in enumerate(shape):
        x = np.arange(g) * h[a]
        axes.append(np.minimum(x, geom.period[a] - x))
    if geom.dim == 1:
        return kernel.profile(axes[0])
    rx, ry = np.meshgrid(*axes, indexing="ij")
    return kernel.profile(np.sqrt(rx * rx + ry * ry))


def periodic_convolve(values: np.ndarray, kernel_samples: np.ndarray,
                      geom: TorusGeometry) -> np.ndarray:
    """(values * kernel)(x_i) = h^n sum_j kernel(x_i - x_j) values_j via FFT."""
    if values.shape != kernel_samples.shape:
        raise InvalidGridError("field and kernel samples must share the grid")
    weight = float(np.prod(cell_widths(values.shape, geom)))
    if values.ndim == 1:
        out = np.fft.irfft(np.fft.rfft(values) * np.fft.rfft(kernel_samples), n=values.shape[0])
    else:
        out = np.fft.irfft2(np.fft.rfft2(values) * np.fft.rfft2(kernel_samples), s=values.shape)
    return out * weight


_MULTIPLIER_CACHE: dict = {}


def _cached_multiplier(mollifier: Mollifier, n: int, period: float, full: bool) -> np.ndarray:
    key = (float(mollifier.delta), n, period, full)
    mult = _MULTIPLIER_CACHE.get(key)
    if mult is None:
        freq = np.fft.fftfreq(n, d=1.0 / n) if full else np.fft.rfftfreq(n, d=1.0 / n)
        mult = mollifier.fourier_multiplier(2.0 * np.pi * freq / period)
        _MULTIPLIER_CACHE[key] = mult
    return mult


def mollifier_convolve(values: np.ndarray, mollifier: Mollifier) -> np.ndarray:
    """Convolution with Psi_delta through its Fourier multiplier.

    Exactly mass-preserving (the k=0 multiplier is 1) and reduces smoothly to
    the identity when delta falls below the grid spacing.  Multipliers are
    cached per (delta, grid).
    """
    geom = mollifier.geom
    if values.ndim != geom.dim:
        raise InvalidGridError("field rank does not match mollifier geometry")
    if geom.dim == 1:
        mult = _cached_multiplier(mollifier, values.shape[0], float(geom.period[0]), False)
        return np.fft.irfft(np.fft.rfft(values) * mult, n=values.shape[0])
    mx = _cached_multiplier(mollifier, values.shape[0], float(geom.period[0]), True)
    my = _cached_multiplier(mollifier, values.shape[1], float(geom.period[1]), False)
    return np.fft.irfft2(np.fft.rfft2(values) * (mx[:, None] * my[None, :]), s=values.shape)


def periodic_interp(values: np.ndarray, points, geom: TorusGeometry) -> np.ndarray:
    """Multilinear periodic interpolation of node values at arbitrary points.

    Monotone (convex combinations of neighbors), reproduces node values
    exactly, and is exact for constants.
    """
    pts = np.asarray(points, dtype=float)
    if geom.dim == 1:
        G = values.shape[0]
        pos = np.mod(pts, geom.period[0]) / geom.period[0] * G
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        i0 = np.mod(i0, G)
        i1 = np.mod(i0 + 1, G)
        return (1.0 - frac) * values[i0] + frac * values[i1]
    Gx, Gy = values.shape
    px = np.mod(pts[..., 0], geom.period[0]) / geom.period[0] * Gx
    py = np.mod(pts[..., 1], geom.period[1]) / geom.period[1] * Gy
    ix0 = np.floor(px).astype(np.int64)
    iy0 = np.floor(py).astype(np.int64)
    fx = px - ix0
    fy = py - iy0
    ix0 = np.mod(ix0, Gx)
    iy0 = np.mod(iy0, Gy)
    ix1 = np.mod(ix0 + 1, Gx)
    iy1 = np.mod(iy0 + 1, Gy)
    return ((1 - fx) * (1 - fy) * values[ix0, iy0] + fx * (1 - fy) * values[ix1, iy0]
            + (1 - fx) * fy * values[ix0, iy1] + fx * fy * values[ix1, iy1])


def spectral_derivative(values: np.ndarray, geom: TorusGeometry, axis: int = 0) -> np.ndarray:
    """d/dx along ``axis`` by Fourier differentiation."""
    G = values.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(G, d=geom.period[axis] / G)
    if G % 2 == 0:
        k[G // 2] = 0.0  # Nyquist mode has no well-defined odd derivative
    spec = np.fft.fft(values, axis=axis)
    shape = [1] * values.ndim
    shape[axis] = G
    return np.real(np.fft.ifft(1j * k.reshape(shape) * spec, axis=axis))
