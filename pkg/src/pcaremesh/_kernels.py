"""Compiled scalar kernels shared by the moment API and the optimizers.

Moments are ``(area, centroid[3], cov[3, 3])`` with ``cov`` centered at the
centroid. Every routine writes into caller-provided buffers so the hot loops
never allocate.
"""

import numpy as np
from numba import njit

MODE_PCA = 0
MODE_PLANE = 1


@njit(cache=True)
def det3(U):
    return (U[0, 0] * (U[1, 1] * U[2, 2] - U[1, 2] * U[2, 1])
            - U[0, 1] * (U[1, 0] * U[2, 2] - U[1, 2] * U[2, 0])
            + U[0, 2] * (U[1, 0] * U[2, 1] - U[1, 1] * U[2, 0]))


@njit(cache=True)
def trace3(U):
    return U[0, 0] + U[1, 1] + U[2, 2]


@njit(cache=True)
def _sym_update(out, A, B, sb, wp, p0, p1, p2, wq, q0, q1, q2):
    """out = A + sb*B + wp*p p^T + wq*q q^T, written symmetrically."""
    p = (p0, p1, p2)
    q = (q0, q1, q2)
    for i in range(3):
        for j in range(i, 3):
            v = A[i, j] + sb * B[i, j] + wp * p[i] * p[j] + wq * q[i] * q[j]
            out[i, j] = v
            out[j, i] = v


@njit(cache=True)
def merge_into(a1, c1, U1, a2, c2, U2, out_c, out_U):
    """Union of two disjoint regions; returns the area, fills centroid and cov."""
    if a2 <= 0.0:
        for i in range(3):
            out_c[i] = c1[i]
            for j in range(3):
                out_U[i, j] = U1[i, j]
        return a1
    if a1 <= 0.0:
        for i in range(3):
            out_c[i] = c2[i]
            for j in range(3):
                out_U[i, j] = U2[i, j]
        return a2
    a = a1 + a2
    ck0 = (a1 * c1[0] + a2 * c2[0]) / a
    ck1 = (a1 * c1[1] + a2 * c2[1]) / a
    ck2 = (a1 * c1[2] + a2 * c2[2]) / a
    p0, p1, p2 = c1[0] - ck0, c1[1] - ck1, c1[2] - ck2
    q0, q1, q2 = c2[0] - ck0, c2[1] - ck1, c2[2] - ck2
    out_c[0], out_c[1], out_c[2] = ck0, ck1, ck2
    _sym_update(out_U, U1, U2, 1.0, a1, p0, p1, p2, a2, q0, q1, q2)
    return a


@njit(cache=True)
def split_into(aw, cw, Uw, ap, cp, Up, out_c, out_U):
    """Remove subregion ``p`` from ``w``; returns the remaining area.

    Returns a non-positive area (and leaves the buffers untouched) when the
    part is not smaller than the whole.
    """
    if ap <= 0.0:
        for i in range(3):
            out_c[i] = cw[i]
            for j in range(3):
                out_U[i, j] = Uw[i, j]
        return aw
    a = aw - ap
    if a <= 0.0:
        return a
    r0 = (aw * cw[0] - ap * cp[0]) / a
    r1 = (aw * cw[1] - ap * cp[1]) / a
    r2 = (aw * cw[2] - ap * cp[2]) / a
    p0, p1, p2 = r0 - cw[0], r1 - cw[1], r2 - cw[2]
    q0, q1, q2 = cp[0] - cw[0], cp[1] - cw[1], cp[2] - cw[2]
    # buffers may alias the inputs: read everything before writing
    out_c[0], out_c[1], out_c[2] = r0, r1, r2
    _sym_update(out_U, Uw, Up, -1.0, -a, p0, p1, p2, -ap, q0, q1, q2)
    return a


@njit(cache=True)
def plane_energy(U):
    return np.linalg.eigvalsh(U)[0]


@njit(cache=True)
def energy(area, U, mode, t, alpha):
    """Cluster energy for the given mode (0: PCA, 1: plane-fit baseline)."""
    if area <= 0.0:
        return 0.0
    if mode == MODE_PLANE:
        return plane_energy(U)
    d = det3(U)
    a2 = area * area
    a4 = a2 * a2
    if d / (a4 * area) < t:
        return alpha * trace3(U) * area
    return d / a4


@njit(cache=True)
def is_degenerate(area, U, t):
    a2 = area * area
    return det3(U) / (a2 * a2 * area) < t


@njit(cache=True)
def direct_moments(labels, n_clusters, fa, fc, fU):
    """From-scratch cluster moments by summation with parallel-axis shifts."""
    area = np.zeros(n_clusters)
    cen = np.zeros((n_clusters, 3))
    cov = np.zeros((n_clusters, 3, 3))
    count = np.zeros(n_clusters, dtype=np.int64)
    for f in range(len(labels)):
        c = labels[f]
        area[c] += fa[f]
        count[c] += 1
        for i in range(3):
            cen[c, i] += fa[f] * fc[f, i]
    for c in range(n_clusters):
        if area[c] > 0.0:
            for i in range(3):
                cen[c, i] /= area[c]
    for f in range(len(labels)):
        c = labels[f]
        for i in range(3):
            di = fc[f, i] - cen[c, i]
            for j in range(3):
                cov[c, i, j] += fU[f, i, j] + fa[f] * di * (fc[f, j] - cen[c, j])
    return area, cen, cov, count
