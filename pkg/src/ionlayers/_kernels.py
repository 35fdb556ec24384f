"""Hot numeric kernels: scaled-unit potential energy, gradient and Hessian.

Positions enter as (N, 3) arrays in units of l0; energies come out in units
of e0.  The trap contribution per ion is

    z^2 + beta rho^2 + delta (x^2 - y^2)
        + anharm (z^4 - 3 z^2 rho^2 + 3/8 rho^4),

with ``anharm = beta C4 (l0 / r_p0)^2``, plus 1/r Coulomb pairs counted once.

Each kernel also returns the smallest pairwise distance squared so callers
can enforce the coincidence guard without a second O(N^2) pass.

Two implementations are provided: numba ``@njit`` loops (default) and pure
numpy (fallback).  Set ``ILF_NO_NUMBA=1`` to force the numpy path; the
active one is reported by ``BACKEND``.  ``benchmarks/bench_kernels.py``
compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("ILF_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _FORCE_NUMPY:
        raise ImportError("numba disabled via ILF_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# --- numpy implementations ---------------------------------------------------


def _pair_geometry(pos):
    """Pairwise separations; returns (dx, dy, dz, r2) with inf on the diagonal."""
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("jka,jka->jk", d, d)
    np.fill_diagonal(r2, np.inf)
    return d[..., 0], d[..., 1], d[..., 2], r2


def energy_numpy(pos, beta, delta, anharm):
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    rho2 = x * x + y * y
    u = np.sum(z * z + beta * rho2 + delta * (x * x - y * y))
    if anharm != 0.0:
        u += anharm * np.sum(z**4 - 3.0 * z * z * rho2 + 0.375 * rho2 * rho2)
    _, _, _, r2 = _pair_geometry(pos)
    min_r2 = float(np.min(r2)) if pos.shape[0] > 1 else np.inf
    u += 0.5 * np.sum(1.0 / np.sqrt(r2[np.isfinite(r2)])) if pos.shape[0] > 1 else 0.0
    return float(u), min_r2


def gradient_numpy(pos, beta, delta, anharm):
    n = pos.shape[0]
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    rho2 = x * x + y * y
    g = np.empty_like(pos)
    g[:, 0] = 2.0 * (beta + delta) * x
    g[:, 1] = 2.0 * (beta - delta) * y
    g[:, 2] = 2.0 * z
    if anharm != 0.0:
        g[:, 0] += anharm * (-6.0 * z * z + 1.5 * rho2) * x
        g[:, 1] += anharm * (-6.0 * z * z + 1.5 * rho2) * y
        g[:, 2] += anharm * (4.0 * z**3 - 6.0 * z * rho2)
    if n > 1:
        dx, dy, dz, r2 = _pair_geometry(pos)
        inv_r3 = r2**-1.5
        np.fill_diagonal(inv_r3, 0.0)
        g[:, 0] -= np.sum(dx * inv_r3, axis=1)
        g[:, 1] -= np.sum(dy * inv_r3, axis=1)
        g[:, 2] -= np.sum(dz * inv_r3, axis=1)
        min_r2 = float(np.min(r2))
    else:
        min_r2 = np.inf
    return g, min_r2


def hessian_numpy(pos, beta, delta, anharm):
    n = pos.shape[0]
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    rho2 = x * x + y * y
    h = np.zeros((n, 3, n, 3))
    idx = np.arange(n)
    min_r2 = np.inf
    if n > 1:
        dx, dy, dz, r2 = _pair_geometry(pos)
        min_r2 = float(np.min(r2))
        inv_r3 = r2**-1.5
        inv_r5 = r2**-2.5
        np.fill_diagonal(inv_r3, 0.0)
        np.fill_diagonal(inv_r5, 0.0)
        dvec = (dx, dy, dz)
        for a in range(3):
            for b in range(3):
                blk = -3.0 * (dvec[a] * dvec[b]) * inv_r5
                if a == b:
                    blk += inv_r3
                h[:, a, :, b] = blk
                h[idx, a, idx, b] = -np.sum(blk, axis=1)
    # external trap curvature on the per-ion diagonal blocks
    h[idx, 0, idx, 0] += 2.0 * (beta + delta)
    h[idx, 1, idx, 1] += 2.0 * (beta - delta)
    h[idx, 2, idx, 2] += 2.0
    if anharm != 0.0:
        h[idx, 0, idx, 0] += anharm * (-6.0 * z * z + 4.5 * x * x + 1.5 * y * y)
        h[idx, 1, idx, 1] += anharm * (-6.0 * z * z + 4.5 * y * y + 1.5 * x * x)
        h[idx, 2, idx, 2] += anharm * (12.0 * z * z - 6.0 * rho2)
        h[idx, 0, idx, 1] += anharm * 3.0 * x * y
        h[idx, 1, idx, 0] += anharm * 3.0 * x * y
        h[idx, 0, idx, 2] += anharm * (-12.0 * z * x)
        h[idx, 2, idx, 0] += anharm * (-12.0 * z * x)
        h[idx, 1, idx, 2] += anharm * (-12.0 * z * y)
        h[idx, 2, idx, 1] += anharm * (-12.0 * z * y)
    return h.reshape(3 * n, 3 * n), min_r2


# --- numba implementations ---------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True, error_model="numpy")
    def energy_numba(pos, beta, delta, anharm):
        n = pos.shape[0]
        u = 0.0
        min_r2 = np.inf
        for j in range(n):
            xj, yj, zj = pos[j, 0], pos[j, 1], pos[j, 2]
            rho2 = xj * xj + yj * yj
            u += zj * zj + beta * rho2 + delta * (xj * xj - yj * yj)
            if anharm != 0.0:
                u += anharm * (zj**4 - 3.0 * zj * zj * rho2 + 0.375 * rho2 * rho2)
            for k in range(j + 1, n):
                dx = xj - pos[k, 0]
                dy = yj - pos[k, 1]
                dz = zj - pos[k, 2]
                r2 = dx * dx + dy * dy + dz * dz
                if r2 < min_r2:
                    min_r2 = r2
                u += 1.0 / np.sqrt(r2)
        return u, min_r2

    @njit(cache=True, error_model="numpy")
    def gradient_numba(pos, beta, delta, anharm):
        n = pos.shape[0]
        g = np.zeros((n, 3))
        min_r2 = np.inf
        for j in range(n):
            xj, yj, zj = pos[j, 0], pos[j, 1], pos[j, 2]
            rho2 = xj * xj + yj * yj
            g[j, 0] += 2.0 * (beta + delta) * xj
            g[j, 1] += 2.0 * (beta - delta) * yj
            g[j, 2] += 2.0 * zj
            if anharm != 0.0:
                g[j, 0] += anharm * (-6.0 * zj * zj + 1.5 * rho2) * xj
                g[j, 1] += anharm * (-6.0 * zj * zj + 1.5 * rho2) * yj
                g[j, 2] += anharm * (4.0 * zj**3 - 6.0 * zj * rho2)
            for k in range(j + 1, n):
                dx = xj - pos[k, 0]
                dy = yj - pos[k, 1]
                dz = zj - pos[k, 2]
                r2 = dx * dx + dy * dy + dz * dz
                if r2 < min_r2:
                    min_r2 = r2
                inv_r3 = 1.0 / (r2 * np.sqrt(r2))
                g[j, 0] -= dx * inv_r3
                g[j, 1] -= dy * inv_r3
                g[j, 2] -= dz * inv_r3
                g[k, 0] += dx * inv_r3
                g[k, 1] += dy * inv_r3
                g[k, 2] += dz * inv_r3
        return g, min_r2

    @njit(cache=True, error_model="numpy")
    def hessian_numba(pos, beta, delta, anharm):
        n = pos.shape[0]
        h = np.zeros((3 * n, 3 * n))
        d = np.empty(3)
        min_r2 = np.inf
        for j in range(n):
            for k in range(j + 1, n):
                d[0] = pos[j, 0] - pos[k, 0]
                d[1] = pos[j, 1] - pos[k, 1]
                d[2] = pos[j, 2] - pos[k, 2]
                r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
                if r2 < min_r2:
                    min_r2 = r2
                inv_r3 = 1.0 / (r2 * np.sqrt(r2))
                inv_r5 = inv_r3 / r2
                for a in range(3):
                    for b in range(3):
                        blk = -3.0 * (d[a] * d[b]) * inv_r5
                        if a == b:
                            blk += inv_r3
                        h[3 * j + a, 3 * k + b] += blk
                        h[3 * k + a, 3 * j + b] += blk
                        h[3 * j + a, 3 * j + b] -= blk
                        h[3 * k + a, 3 * k + b] -= blk
        for j in range(n):
            xj, yj, zj = pos[j, 0], pos[j, 1], pos[j, 2]
            rho2 = xj * xj + yj * yj
            h[3 * j + 0, 3 * j + 0] += 2.0 * (beta + delta)
            h[3 * j + 1, 3 * j + 1] += 2.0 * (beta - delta)
            h[3 * j + 2, 3 * j + 2] += 2.0
            if anharm != 0.0:
                h[3 * j + 0, 3 * j + 0] += anharm * (
                    -6.0 * zj * zj + 4.5 * xj * xj + 1.5 * yj * yj
                )
                h[3 * j + 1, 3 * j + 1] += anharm * (
                    -6.0 * zj * zj + 4.5 * yj * yj + 1.5 * xj * xj
                )
                h[3 * j + 2, 3 * j + 2] += anharm * (12.0 * zj * zj - 6.0 * rho2)
                h[3 * j + 0, 3 * j + 1] += anharm * 3.0 * xj * yj
                h[3 * j + 1, 3 * j + 0] += anharm * 3.0 * xj * yj
                h[3 * j + 0, 3 * j + 2] += anharm * (-12.0 * zj * xj)
                h[3 * j + 2, 3 * j + 0] += anharm * (-12.0 * zj * xj)
                h[3 * j + 1, 3 * j + 2] += anharm * (-12.0 * zj * yj)
                h[3 * j + 2, 3 * j + 1] += anharm * (-12.0 * zj * yj)
        return h, min_r2

    energy = energy_numba
    gradient = gradient_numba
    hessian = hessian_numba
    BACKEND = "numba"
else:
    energy_numba = gradient_numba = hessian_numba = None
    energy = energy_numpy
    gradient = gradient_numpy
    hessian = hessian_numpy
    BACKEND = "numpy"
