"""Analytic test surfaces with exact curvature and closest-point oracles.

Curved kinds are quadrics given implicitly by ``F(x) = 0``; their principal
curvatures follow from the gradient and Hessian of ``F``. The flat kinds
(plane, cube, cylinder caps) report zero curvature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh_core import TriangleMesh

KINDS = ("paraboloid", "ellipsoid", "sphere", "plane", "cylinder", "cube")

_DEFAULTS = {
    "paraboloid": {"a": 1.0, "b": 1.0, "extent": 1.0},
    "ellipsoid": {"a": 2.0, "b": 1.0, "c": 1.0},
    "sphere": {"radius": 1.0},
    "plane": {"extent": 1.0},
    "cylinder": {"radius": 1.0, "height": 2.0},
    "cube": {"half_size": 1.0},
}


@dataclass
class AnalyticSurface:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}; expected one of {KINDS}")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged.update({k: float(v) for k, v in self.params.items()})
        for k, v in merged.items():
            if not v > 0:
                raise ValueError(f"{self.kind} parameter {k} must be positive")
        self.params = merged

    # -- implicit description of the quadric kinds -------------------------

    def _quadric(self):
        """``(A, b, c)`` with ``F(x) = x^T A x + b . x + c``; None for flat kinds."""
        p = self.params
        if self.kind == "paraboloid":
            return np.diag([p["a"], p["b"], 0.0]), np.array([0.0, 0.0, -1.0]), 0.0
        if self.kind == "ellipsoid":
            return np.diag([1 / p["a"] ** 2, 1 / p["b"] ** 2, 1 / p["c"] ** 2]), np.zeros(3), -1.0
        if self.kind == "sphere":
            return np.eye(3), np.zeros(3), -p["radius"] ** 2
        return None

    def principal_curvatures(self, points) -> tuple[np.ndarray, np.ndarray]:
        """``(k_max, k_min)`` by absolute value at surface points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.kind == "cylinder":
            r = self.params["radius"]
            on_side = np.abs(pts[:, 2]) < 0.5 * self.params["height"] - 1e-12
            kmax = np.where(on_side, 1.0 / r, 0.0)
            return kmax, np.zeros(len(pts))
        q = self._quadric()
        if q is None:
            z = np.zeros(len(pts))
            return z, z.copy()
        A, b, _ = q
        g = 2.0 * pts @ A + b
        H = 2.0 * A
        gn = np.linalg.norm(g, axis=1)
        adj = _adjugate(H)
        gauss = np.einsum("fi,ij,fj->f", g, adj, g) / gn ** 4
        mean = (np.einsum("fi,ij,fj->f", g, H, g) - gn ** 2 * np.trace(H)) / (2 * gn ** 3)
        disc = np.sqrt(np.maximum(mean ** 2 - gauss, 0.0))
        k1, k2 = np.abs(mean + disc), np.abs(mean - disc)
        return np.maximum(k1, k2), np.minimum(k1, k2)

    def gaussian_curvature(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        q = self._quadric()
        if q is None:
            return np.zeros(len(pts))
        A, b, _ = q
        g = 2.0 * pts @ A + b
        return np.einsum("fi,ij,fj->f", g, _adjugate(2.0 * A), g) / np.linalg.norm(g, axis=1) ** 4

    def normal(self, points) -> np.ndarray:
        """Outward (or upward, for graphs) unit normals at surface points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        q = self._quadric()
        if self.kind == "plane":
            n = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
        elif self.kind == "cube":
            n = np.zeros_like(pts)
            ax = np.argmax(np.abs(pts), axis=1)
            n[np.arange(len(pts)), ax] = np.sign(pts[np.arange(len(pts)), ax])
        elif self.kind == "cylinder":
            h = 0.5 * self.params["height"]
            n = np.column_stack([pts[:, 0], pts[:, 1], np.zeros(len(pts))])
            cap = np.abs(pts[:, 2]) >= h - 1e-12
            n[cap] = np.column_stack([np.zeros((cap.sum(), 2)), np.sign(pts[cap, 2])])
        else:
            A, b, _ = q
            n = 2.0 * pts @ A + b
            if self.kind == "paraboloid":
                n = -n
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def residual(self, points) -> np.ndarray:
        """Implicit function value (zero on the surface) for the quadric kinds."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        A, b, c = self._quadric()
        return np.einsum("fi,ij,fj->f", pts, A, pts) + pts @ b + c

    # -- closest point ------------------------------------------------------

    def project(self, points, tol: float = 1e-10) -> np.ndarray:
        """Closest surface points; ``tol`` is absolute in model units."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        p = self.params
        if self.kind == "plane":
            return np.column_stack([pts[:, :2], np.zeros(len(pts))])
        if self.kind == "sphere":
            r = np.linalg.norm(pts, axis=1, keepdims=True)
            return pts * (p["radius"] / np.where(r > 0, r, 1.0))
        if self.kind == "cube":
            return _project_box(pts, p["half_size"])
        if self.kind == "cylinder":
            return _project_cylinder(pts, p["radius"], 0.5 * p["height"])
        if self.kind == "ellipsoid":
            return np.array([_project_ellipsoid(x, (p["a"], p["b"], p["c"]), tol) for x in pts])
        return _project_graph(pts, p["a"], p["b"], tol)

    # -- tessellation -------------------------------------------------------

    def tessellate(self, resolution: int) -> TriangleMesh:
        """Deterministic triangulation of the surface.

        ``resolution`` is the grid size per side for plane, paraboloid and
        cylinder, the quads per cube facet side, and the number of icosahedron
        subdivisions for sphere and ellipsoid.
        """
        p = self.params
        if self.kind in ("sphere", "ellipsoid"):
            if resolution < 0:
                raise ValueError("subdivision level must be >= 0")
            v, f = icosphere(resolution)
            scale = [p["radius"]] * 3 if self.kind == "sphere" else [p["a"], p["b"], p["c"]]
            return TriangleMesh(v * np.asarray(scale), f)
        if self.kind == "cube":
            if resolution < 1:
                raise ValueError("cube resolution must be >= 1")
            return _cube(resolution, p["half_size"])
        if resolution < 2:
            raise ValueError("grid resolution must be >= 2")
        if self.kind == "cylinder":
            return _cylinder(resolution, p["radius"], p["height"])
        e = p["extent"]
        v, f = grid(resolution, -e, e)
        if self.kind == "paraboloid":
            v[:, 2] = p["a"] * v[:, 0] ** 2 + p["b"] * v[:, 1] ** 2
        return TriangleMesh(v, f)


def _adjugate(H):
    return np.array([
        [H[1, 1] * H[2, 2] - H[1, 2] * H[2, 1], H[0, 2] * H[2, 1] - H[0, 1] * H[2, 2],
         H[0, 1] * H[1, 2] - H[0, 2] * H[1, 1]],
        [H[1, 2] * H[2, 0] - H[1, 0] * H[2, 2], H[0, 0] * H[2, 2] - H[0, 2] * H[2, 0],
         H[0, 2] * H[1, 0] - H[0, 0] * H[1, 2]],
        [H[1, 0] * H[2, 1] - H[1, 1] * H[2, 0], H[0, 1] * H[2, 0] - H[0, 0] * H[2, 1],
         H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]],
    ])


def _project_box(pts, s):
    q = np.clip(pts, -s, s)
    inside = np.all(np.abs(pts) < s, axis=1)
    if inside.any():
        qi = q[inside]
        ax = np.argmax(np.abs(qi), axis=1)
        rows = np.arange(len(qi))
        qi[rows, ax] = np.where(qi[rows, ax] >= 0, s, -s)
        q[inside] = qi
    return q


def _project_cylinder(pts, r, h):
    rho = np.linalg.norm(pts[:, :2], axis=1)
    safe = np.where(rho > 0, rho, 1.0)
    side = np.column_stack([pts[:, 0] * r / safe, pts[:, 1] * r / safe, np.clip(pts[:, 2], -h, h)])
    side[rho == 0, 0] = r
    scale = np.minimum(1.0, r / safe)[:, None]
    cap = np.column_stack([pts[:, :2] * scale, np.where(pts[:, 2] >= 0, h, -h)])
    d_side = np.linalg.norm(side - pts, axis=1)
    d_cap = np.linalg.norm(cap - pts, axis=1)
    return np.where((d_side <= d_cap)[:, None], side, cap)


def _project_ellipsoid(x, axes, tol):
    """Closest point via the root of ``sum (a_i x_i / (t + a_i^2))^2 = 1``."""
    a = np.asarray(axes, dtype=np.float64)
    sign = np.where(x < 0, -1.0, 1.0)
    y = np.abs(x)
    a2 = a * a

    def g(t):
        return np.sum((a * y / (t + a2)) ** 2) - 1.0

    lo = -a2.min() + 1e-300
    # outside or on the surface: t >= 0; inside: t in (-min a^2, 0)
    if g(0.0) > 0:
        lo, hi = 0.0, np.linalg.norm(a * y) + 1.0
    else:
        hi = 0.0
        # keep the lower bracket where g is positive (or the axis-degenerate case)
        lo = -a2.min()
        lo_eval = lo + 1e-15 * a2.min()
        if g(lo_eval) < 0:
            # degenerate case: the component along the shortest axis is ~0
            lo = lo_eval
    t = 0.5 * (lo + hi)
    for _ in range(200):
        t = 0.5 * (lo + hi)
        if g(t) > 0:
            lo = t
        else:
            hi = t
        if hi - lo <= tol * 1e-3 * max(1.0, abs(t)):
            break
    z = a2 * y / (t + a2)
    # renormalize onto the surface to absorb bisection error
    z /= np.sqrt(np.sum((z / a) ** 2))
    return sign * z


def _project_graph(pts, ca, cb, tol):
    """Closest point on z = a x^2 + b y^2 by damped Newton in (x, y)."""
    out = np.empty_like(pts)
    for k, p in enumerate(pts):
        u = p[:2].copy()

        def dist2(u):
            return (u[0] - p[0]) ** 2 + (u[1] - p[1]) ** 2 + (ca * u[0] ** 2 + cb * u[1] ** 2 - p[2]) ** 2

        for _ in range(100):
            h = ca * u[0] ** 2 + cb * u[1] ** 2 - p[2]
            fx, fy = 2 * ca * u[0], 2 * cb * u[1]
            grad = np.array([(u[0] - p[0]) + h * fx, (u[1] - p[1]) + h * fy])
            hess = np.array([[1 + fx * fx + h * 2 * ca, fx * fy],
                             [fx * fy, 1 + fy * fy + h * 2 * cb]])
            try:
                step = np.linalg.solve(hess, grad)
                if grad @ step <= 0:
                    step = grad
            except np.linalg.LinAlgError:
                step = grad
            d0 = dist2(u)
            lam = 1.0
            while lam > 1e-12 and dist2(u - lam * step) > d0:
                lam *= 0.5
            u = u - lam * step
            if lam * np.linalg.norm(step) < tol:
                break
        out[k] = (u[0], u[1], ca * u[0] ** 2 + cb * u[1] ** 2)
    return out


def grid(resolution: int, lo: float = -1.0, hi: float = 1.0):
    """Regular ``resolution x resolution`` vertex grid in the z = 0 plane."""
    x = np.linspace(lo, hi, resolution)
    X, Y = np.meshgrid(x, x, indexing="ij")
    v = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    idx = np.arange(resolution * resolution).reshape(resolution, resolution)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return v, f


def icosphere(level: int):
    """Unit icosahedron subdivided ``level`` times, vertices on the sphere."""
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=np.float64)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(level):
        edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        nf = len(f)
        m01, m12, m20 = (len(v) + inv[:nf], len(v) + inv[nf:2 * nf], len(v) + inv[2 * nf:])
        v = np.concatenate([v, mid])
        f = np.concatenate([
            np.column_stack([f[:, 0], m01, m20]),
            np.column_stack([f[:, 1], m12, m01]),
            np.column_stack([f[:, 2], m20, m12]),
            np.column_stack([m01, m12, m20]),
        ])
    return v, f


def _weld(verts, faces, decimals=12):
    key = np.round(verts, decimals)
    uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    # keep the first occurrence order so output is deterministic and stable
    order = np.argsort(first)
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    return verts[first[order]], remap[inv.ravel()][faces]


def _cube(r, s):
    v2, f2 = grid(r + 1, -s, s)
    verts, faces = [], []
    offset = 0
    # each facet: (u axis, v axis, normal axis, sign); u x v points outward
    for u_ax, v_ax, n_ax, sign in ((1, 2, 0, 1), (2, 1, 0, -1), (2, 0, 1, 1),
                                   (0, 2, 1, -1), (0, 1, 2, 1), (1, 0, 2, -1)):
        v = np.zeros((len(v2), 3))
        v[:, u_ax] = v2[:, 0]
        v[:, v_ax] = v2[:, 1]
        v[:, n_ax] = sign * s
        verts.append(v)
        faces.append(f2 + offset)
        offset += len(v2)
    return TriangleMesh(*_weld(np.concatenate(verts), np.concatenate(faces)))


def _cylinder(r, radius, height):
    na = max(3, int(round(np.pi * (r - 1))))
    nz = r
    theta = 2 * np.pi * np.arange(na) / na
    z = np.linspace(-height / 2, height / 2, nz)
    ring = np.column_stack([np.cos(theta), np.sin(theta)]) * radius
    side = np.column_stack([np.tile(ring, (nz, 1)), np.repeat(z, na)])
    idx = np.arange(nz * na).reshape(nz, na)
    a, b = idx[:-1, :], np.roll(idx[:-1, :], -1, axis=1)
    c, d = np.roll(idx[1:, :], -1, axis=1), idx[1:, :]
    faces = [np.column_stack([a.ravel(), b.ravel(), c.ravel()]),
             np.column_stack([a.ravel(), c.ravel(), d.ravel()])]
    verts = [side]
    n_rings = max(1, (r - 1) // 2)
    for cap_z, rim, up in ((-height / 2, idx[0], False), (height / 2, idx[-1], True)):
        base = sum(len(x) for x in verts)
        inner = []
        for k in range(n_rings - 1, 0, -1):
            inner.append(np.column_stack([ring * k / n_rings, np.full(na, cap_z)]))
        center = np.array([[0.0, 0.0, cap_z]])
        verts.extend(inner + [center])
        rings = [rim] + [base + na * m + np.arange(na) for m in range(len(inner))]
        ctr = base + na * len(inner)
        for outer, inn in zip(rings[:-1], rings[1:]):
            o1 = np.roll(outer, -1)
            i1 = np.roll(inn, -1)
            quad = [np.column_stack([outer, o1, i1]), np.column_stack([outer, i1, inn])]
            faces.extend([q[:, ::-1] if not up else q for q in quad])
        last = rings[-1]
        fan = np.column_stack([last, np.roll(last, -1), np.full(na, ctr)])
        faces.append(fan if up else fan[:, ::-1])
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces))


def add_normal_noise(mesh: TriangleMesh, sigma: float, seed: int = 0,
                     surface: AnalyticSurface | None = None) -> TriangleMesh:
    """Displace vertices along their normals by Gaussian offsets.

    ``sigma`` is the offset variance in units of the squared bounding-box
    diagonal (``var(offset / diag) = sigma``). Normals come from ``surface``
    when given, otherwise from area-weighted face normals.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    out = mesh.copy()
    if sigma == 0:
        return out
    normals = surface.normal(mesh.vertices) if surface is not None else mesh.vertex_normals()
    rng = np.random.default_rng(seed)
    offsets = rng.normal(0.0, np.sqrt(sigma) * mesh.bbox_diagonal, size=mesh.n_vertices)
    out.vertices = mesh.vertices + offsets[:, None] * normals
    return out
