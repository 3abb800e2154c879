"""Reference computations that do not go through the package's moment code."""

from __future__ import annotations

import numpy as np

from pcaremesh.mesh_core import TriangleMesh


def mc_triangle_moments(a, b, c, n=400_000, seed=0):
    """Monte Carlo area, centroid and second central moment of a triangle."""
    rng = np.random.default_rng(seed)
    a, b, c = (np.asarray(x, dtype=np.float64) for x in (a, b, c))
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    pts = (1 - s)[:, None] * a + (s * (1 - r2))[:, None] * b + (s * r2)[:, None] * c
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
    cen = pts.mean(axis=0)
    d = pts - cen
    return area, cen, area * (d.T @ d) / n


def sympy_triangle_moments(a, b, c):
    """Exact moments of a triangle with rational vertices via symbolic integration."""
    import sympy as sp

    s, t = sp.symbols("s t", nonnegative=True)
    A, B, C = (sp.Matrix([sp.nsimplify(x) for x in p]) for p in (a, b, c))
    p = A + s * (B - A) + t * (C - A)
    jac = (B - A).cross(C - A).norm()

    def integral(expr):
        return sp.integrate(sp.integrate(expr * jac, (t, 0, 1 - s)), (s, 0, 1))

    area = integral(sp.Integer(1))
    cen = sp.Matrix([integral(p[i]) / area for i in range(3)])
    cov = sp.Matrix(3, 3, lambda i, j: integral((p[i] - cen[i]) * (p[j] - cen[j])))
    return (float(area), np.array([float(x) for x in cen]),
            np.array(cov.tolist(), dtype=np.float64))


def quad_patch_moments(k1, k2, e1, e2, order=24):
    """Moments of ``z = (k1 u^2 + k2 v^2) / 2`` over ``[-e1, e1] x [-e2, e2]``.

    Tensor Gauss-Legendre quadrature with the exact area element.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    u, v = np.meshgrid(e1 * x, e2 * x, indexing="ij")
    W = np.outer(w, w) * e1 * e2 * np.sqrt(1 + (k1 * u) ** 2 + (k2 * v) ** 2)
    P = np.stack([u, v, 0.5 * (k1 * u ** 2 + k2 * v ** 2)], axis=-1).reshape(-1, 3)
    W = W.ravel()
    area = W.sum()
    cen = (W[:, None] * P).sum(axis=0) / area
    d = P - cen
    return area, cen, (W[:, None] * d).T @ d


def patch_mesh(k1, k2, e1, e2, res=64) -> TriangleMesh:
    """Triangulated quadratic patch on a ``res x res`` vertex grid."""
    u, v = np.meshgrid(np.linspace(-e1, e1, res), np.linspace(-e2, e2, res), indexing="ij")
    V = np.column_stack([u.ravel(), v.ravel(), 0.5 * (k1 * u.ravel() ** 2 + k2 * v.ravel() ** 2)])
    idx = np.arange(res * res).reshape(res, res)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    F = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriangleMesh(V, F)


def direct_cluster_moments(fa, fc, fU, faces):
    """Area, centroid and covariance of a face set by plain summation."""
    a = fa[faces]
    area = a.sum()
    cen = (a[:, None] * fc[faces]).sum(axis=0) / area
    d = fc[faces] - cen
    cov = fU[faces].sum(axis=0) + (a[:, None, None] * d[:, :, None] * d[:, None, :]).sum(axis=0)
    return area, cen, cov


def energy_from_scratch(area, cov, params):
    """Cluster energy evaluated with eigenvalues rather than the kernel's determinant."""
    w = np.linalg.eigvalsh(cov)
    if params.energy_mode == "plane_fitting_baseline":
        return w[0]
    det = np.prod(w)
    if det / area ** 5 < params.degenerate_threshold:
        return params.quality_coefficient * w.sum() * area
    return det / area ** 4


def random_soup(rng, n, spread=1.0, size=0.3):
    """Random independent triangles."""
    base = rng.uniform(-spread, spread, size=(n, 1, 3))
    V = (base + rng.normal(scale=size, size=(n, 3, 3))).reshape(-1, 3)
    return TriangleMesh(V, np.arange(3 * n).reshape(n, 3))


def rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def scratch_energies(labels, fa, fc, fU, params):
    """Per-cluster energies from plain summation and eigenvalues."""
    out = []
    for c in range(int(labels.max()) + 1):
        area, _, cov = direct_cluster_moments(fa, fc, fU, np.flatnonzero(labels == c))
        out.append(energy_from_scratch(area, cov, params))
    return np.array(out)


def bfs_connected(faces, neighbors) -> bool:
    """True when ``faces`` form one edge-connected set."""
    faces = set(int(f) for f in faces)
    start = next(iter(faces))
    seen, stack = {start}, [start]
    while stack:
        f = stack.pop()
        for g in neighbors[f]:
            g = int(g)
            if g >= 0 and g in faces and g not in seen:
                seen.add(g)
                stack.append(g)
    return len(seen) == len(faces)


def bumpy_grid(res, seed=0, amp=0.05):
    """Small grid with a smooth random height field (no flat ties)."""
    rng = np.random.default_rng(seed)
    u, v = np.meshgrid(np.linspace(0, 1, res), np.linspace(0, 1, res), indexing="ij")
    z = sum(rng.normal() * np.sin((i + 1) * np.pi * u + rng.uniform(0, 6)) *
            np.sin((j + 1) * np.pi * v + rng.uniform(0, 6)) for i in range(3) for j in range(3))
    V = np.column_stack([u.ravel(), v.ravel(), amp * z.ravel() + 1e-4 * rng.normal(size=res * res)])
    idx = np.arange(res * res).reshape(res, res)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    F = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriangleMesh(V, F)
