"""Hot inner loops: pairwise forces and point-evaluated kernel sums.

Each kernel exists twice: a numba ``@njit`` version and a vectorized numpy
version with identical semantics.  Selection is made once at import from the
environment flag ``ALIGNLAB_NUMBA``:

    ALIGNLAB_NUMBA=0      force the pure-numpy path
    ALIGNLAB_NUMBA=1      require numba (ImportError if unavailable)
    unset / auto          use numba when importable

Kernels whose radial profile cannot be packed into a numeric descriptor
(arbitrary Python callables) are always served by the numpy path.

``benchmarks/bench_forces.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

from .torus import KIND_CONSTANT, KIND_INVERSE_POWER, KIND_TABULATED

_FLAG = os.environ.get("ALIGNLAB_NUMBA", "auto").lower()

if _FLAG in ("0", "off", "false", "no"):
    NUMBA_ENABLED = False
elif _FLAG in ("1", "on", "true", "require"):
    import numba  # noqa: F401

    NUMBA_ENABLED = True
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def _chunked_distance(pts, src, period):
    # (P, N) minimal-image distances, broadcast over the last axis
    d = pts[:, None, :] - src[None, :, :]
    d -= np.round(d / period) * period
    return np.sqrt(np.sum(d * d, axis=-1))


def _profile_matrix(kernel, pts, src, period, chunk=512):
    """phi(|pts_i - src_j|) row-chunked to bound the working set."""
    P = pts.shape[0]
    out = np.empty((P, src.shape[0]))
    for lo in range(0, P, chunk):
        hi = min(lo + chunk, P)
        out[lo:hi] = kernel.profile(_chunked_distance(pts[lo:hi], src, period))
    return out


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def _np_pairwise_alignment(x, v, m, kernel, period, weights):
    phi = _profile_matrix(kernel, x, x, period)
    wm = phi * m[None, :]
    acc = wm @ v - np.sum(wm, axis=1)[:, None] * v
    return weights[:, None] * acc


def _np_favre_points(pts, x, v, m, kernel, period):
    phi = _profile_matrix(kernel, pts, x, period)
    wm = phi * m[None, :]
    return wm @ v, np.sum(wm, axis=1)


def _np_density_phi(pts, x, m, kernel, period):
    phi = _profile_matrix(kernel, pts, x, period)
    return phi @ m


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    from numba import njit, prange

    _JIT = dict(cache=True, nogil=True, fastmath=True)

    @njit(inline="always", **_JIT)
    def _phi_desc(r, kind, param, table_v, inv_dr, nt):
        if kind == KIND_CONSTANT:
            return param
        if kind == KIND_INVERSE_POWER:
            return (1.0 + r * r) ** (-param)
        # tabulated, uniform grid, clamped
        pos = r * inv_dr
        i = int(pos)
        if i >= nt - 1:
            return table_v[nt - 1]
        frac = pos - i
        return table_v[i] * (1.0 - frac) + table_v[i + 1] * frac

    @njit(parallel=True, **_JIT)
    def _nb_pairwise_alignment(x, v, m, kind, param, table_v, inv_dr, period, weights):
        n, dim = x.shape
        nt = table_v.shape[0]
        out = np.zeros((n, dim))
        for i in prange(n):
            for j in range(n):
                r2 = 0.0
                for a in range(dim):
                    d = x[i, a] - x[j, a]
                    d -= np.round(d / period[a]) * period[a]
                    r2 += d * d
                phi = _phi_desc(np.sqrt(r2), kind, param, table_v, inv_dr, nt)
                c = m[j] * phi
                for a in range(dim):
                    out[i, a] += c * (v[j, a] - v[i, a])
            for a in range(dim):
                out[i, a] *= weights[i]
        return out

    @njit(parallel=True, **_JIT)
    def _nb_favre_points(pts, x, v, m, kind, param, table_v, inv_dr, period):
        p, dim = pts.shape
        n = x.shape[0]
        nt = table_v.shape[0]
        num = np.zeros((p, dim))
        den = np.zeros(p)
        for i in prange(p):
            for j in range(n):
                r2 = 0.0
                for a in range(dim):
                    d = pts[i, a] - x[j, a]
                    d -= np.round(d / period[a]) * period[a]
                    r2 += d * d
                phi = _phi_desc(np.sqrt(r2), kind, param, table_v, inv_dr, nt)
                c = m[j] * phi
                den[i] += c
                for a in range(dim):
                    num[i, a] += c * v[j, a]
        return num, den

    @njit(parallel=True, **_JIT)
    def _nb_density_phi(pts, x, m, kind, param, table_v, inv_dr, period):
        p, dim = pts.shape
        n = x.shape[0]
        nt = table_v.shape[0]
        out = np.zeros(p)
        for i in prange(p):
            for j in range(n):
                r2 = 0.0
                for a in range(dim):
                    d = pts[i, a] - x[j, a]
                    d -= np.round(d / period[a]) * period[a]
                    r2 += d * d
                out[i] += m[j] * _phi_desc(np.sqrt(r2), kind, param, table_v, inv_dr, nt)
        return out


def _unpack(kernel):
    """Descriptor -> (kind, param, table_v, inv_dr) arguments for the jit loops."""
    kind, param, table_r, table_v = kernel.descriptor
    if kind == KIND_TABULATED:
        dr = table_r[1] - table_r[0]
        return kind, 0.0, np.ascontiguousarray(table_v, dtype=float), 1.0 / dr
    return kind, float(param), np.zeros(1), 0.0


def _use_numba(kernel) -> bool:
    return NUMBA_ENABLED and kernel.descriptor is not None


def _as2d(pts):
    """(N, dim) view: 1d arrays gain a component axis, 2d-point arrays with
    extra leading axes are flattened (the dispatchers restore the shape)."""
    pts = np.ascontiguousarray(pts, dtype=float)
    if pts.ndim == 1:
        return pts[:, None]
    if pts.ndim > 2:
        return pts.reshape(-1, pts.shape[-1])
    return pts


# ---------------------------------------------------------------------------
# public dispatchers
# ---------------------------------------------------------------------------


def pairwise_alignment(x, v, m, kernel, geom, weights=None):
    """sum_j m_j phi(|x_i-x_j|)(v_j-v_i), row-scaled by ``weights`` (default 1)."""
    squeeze = np.ndim(x) == 1
    x2, v2 = _as2d(x), _as2d(v)
    m = np.ascontiguousarray(m, dtype=float)
    w = np.ones(x2.shape[0]) if weights is None else np.ascontiguousarray(weights, dtype=float)
    period = np.ascontiguousarray(geom.period, dtype=float)
    if _use_numba(kernel):
        kind, param, tv, inv_dr = _unpack(kernel)
        out = _nb_pairwise_alignment(x2, v2, m, kind, param, tv, inv_dr, period, w)
    else:
        out = _np_pairwise_alignment(x2, v2, m, kernel, period, w)
    return out[:, 0] if squeeze else out


def favre_points(pts, x, v, m, kernel, geom):
    """Numerator sum m_j phi v_j and denominator sum m_j phi at eval points."""
    squeeze = np.ndim(pts) == 1
    pts2, x2, v2 = _as2d(pts), _as2d(x), _as2d(v)
    m = np.ascontiguousarray(m, dtype=float)
    period = np.ascontiguousarray(geom.period, dtype=float)
    if _use_numba(kernel):
        kind, param, tv, inv_dr = _unpack(kernel)
        num, den = _nb_favre_points(pts2, x2, v2, m, kind, param, tv, inv_dr, period)
    else:
        num, den = _np_favre_points(pts2, x2, v2, m, kernel, period)
    return (num[:, 0], den) if squeeze else (num, den)


def density_phi_points(pts, x, m, kernel, geom):
    """sum_j m_j phi(|p - x_j|) at each evaluation point.

    Accepts point arrays with extra leading axes (grids of 2d nodes); the
    output keeps those axes.
    """
    pts = np.asarray(pts, dtype=float)
    lead = pts.shape[:-1] if pts.ndim > 1 else pts.shape
    pts2, x2 = _as2d(pts), _as2d(x)
    m = np.ascontiguousarray(m, dtype=float)
    period = np.ascontiguousarray(geom.period, dtype=float)
    if _use_numba(kernel):
        kind, param, tv, inv_dr = _unpack(kernel)
        out = _nb_density_phi(pts2, x2, m, kind, param, tv, inv_dr, period)
    else:
        out = _np_density_phi(pts2, x2, m, kernel, period)
    return out.reshape(lead)
