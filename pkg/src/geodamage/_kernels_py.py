"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` one to one and are used when the compiled
extension is unavailable.  Constraint codes: 0 = ball (a = r_h), 1 =
Drucker-Prager (a = tau, b = kappa).
"""

from __future__ import annotations

import numpy as np

# Relative rounding slack in the cone-membership test of the Drucker-Prager
# support function; prox outputs sit exactly on the cone boundary.
CONE_RTOL = 1e-12


def _split(Z, n):
    m = Z.shape[1]
    s = np.sqrt(n)
    x = Z[:, :n].sum(axis=1) / s
    d = Z.copy()
    d[:, :n] -= (x / s)[:, None]
    r = np.sqrt(np.einsum("ij,ij->i", d, d))
    e_axis = np.zeros(m)
    e_axis[:n] = 1.0 / s
    return x, d, r, e_axis


def support_nodes(Q, kind, a, b, n):
    Q = np.asarray(Q, dtype=float)
    if kind == 0:
        return a * np.sqrt(np.einsum("ij,ij->i", Q, Q))
    tau, kappa = a, b
    tr = Q[:, :n].sum(axis=1)
    d = Q.copy()
    d[:, :n] -= (tr / n)[:, None]
    dn = np.sqrt(np.einsum("ij,ij->i", d, d))
    feasible = tr >= tau * dn - CONE_RTOL * (np.abs(tr) + tau * dn)
    out = np.full(Q.shape[0], np.inf)
    out[feasible] = (kappa / tau) * np.maximum(tr[feasible], 0.0)
    return out


def prox_nodes(Z, lam, kind, a, b, n):
    Z = np.asarray(Z, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if kind == 0:
        nz = np.sqrt(np.einsum("ij,ij->i", Z, Z))
        thr = lam * a
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(nz > thr, 1.0 - thr / np.where(nz > 0, nz, 1.0), 0.0)
        return Z * f[:, None]
    tau, kappa = a, b
    x, d, r, e_axis = _split(Z, n)
    c = tau / np.sqrt(n)
    x_a = lam * kappa / c
    z0 = x_a - x
    out = np.zeros_like(Z)
    inside = r <= c * z0
    apex = (~inside) & (c * r <= -z0)
    bnd = ~(inside | apex)
    out[apex] = Z[apex] - x_a[apex, None] * e_axis
    if np.any(bnd):
        zs = (z0[bnd] + c * r[bnd]) / (1.0 + c * c)
        bb = r[bnd] - c * zs
        aa = c * bb
        dhat = d[bnd] / r[bnd, None]
        out[bnd] = aa[:, None] * e_axis + bb[:, None] * dhat
    return out


def prox_jacobian_nodes(Z, lam, kind, a, b, n):
    Z = np.asarray(Z, dtype=float)
    lam = np.asarray(lam, dtype=float)
    N, m = Z.shape
    eye = np.eye(m)
    J = np.zeros((N, m, m))
    if kind == 0:
        nz = np.sqrt(np.einsum("ij,ij->i", Z, Z))
        thr = lam * a
        act = nz > thr
        if np.any(act):
            zz = Z[act]
            nn = nz[act]
            s = thr[act]
            J[act] = (1.0 - s / nn)[:, None, None] * eye + (s / nn**3)[:, None, None] * np.einsum(
                "ij,ik->ijk", zz, zz
            )
        return J
    tau, kappa = a, b
    x, d, r, e_axis = _split(Z, n)
    c = tau / np.sqrt(n)
    x_a = lam * kappa / c
    z0 = x_a - x
    inside = r <= c * z0
    apex = (~inside) & (c * r <= -z0)
    bnd = ~(inside | apex)
    J[apex] = eye
    if np.any(bnd):
        zs = (z0[bnd] + c * r[bnd]) / (1.0 + c * c)
        dhat = d[bnd] / r[bnd, None]
        v = c * dhat - e_axis
        pd = eye - np.outer(e_axis, e_axis)
        dproj = np.einsum("ij,ik->ijk", v, v) / (1.0 + c * c)
        dproj += (c * zs / r[bnd])[:, None, None] * (pd - np.einsum("ij,ik->ijk", dhat, dhat))
        J[bnd] = eye - dproj
    return J


def grid_scan(center, h, npts, C, eps, bval, lam_h, p_prev, kind, a, b, n):
    """Minimize 1/2 (eps-p).C(eps-p) + bval |p|^2 + lam_h H(p - p_prev) over a cubic grid.

    The grid is ``center + h * (i - (npts-1)/2)`` in each of the three Voigt
    coordinates.  Returns ``(best_value, best_p)``.
    """
    off = h * (np.arange(npts) - 0.5 * (npts - 1))
    g0, g1, g2 = np.meshgrid(center[0] + off, center[1] + off, center[2] + off, indexing="ij")
    P = np.stack([g0.ravel(), g1.ravel(), g2.ravel()], axis=1)
    R = eps[None, :] - P
    val = 0.5 * np.einsum("ij,jk,ik->i", R, C, R) + bval * np.einsum("ij,ij->i", P, P)
    if lam_h != 0.0:
        val = val + lam_h * support_nodes(P - p_prev[None, :], kind, a, b, n)
    k = int(np.argmin(val))
    return float(val[k]), P[k].copy()
