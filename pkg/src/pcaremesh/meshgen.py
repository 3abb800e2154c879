"""Polygonal and triangular mesh extraction from a cleaned partition."""

from __future__ import annotations

import heapq
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .mesh_core import FaceAdjacency, TriangleMesh, build_adjacency
from .moments import PlaneProxy, proxy_plane
from .partition import Partition

logger = logging.getLogger(__name__)

__all__ = [
    "AnchorVertex", "PlaneProxy", "PolygonalMesh", "QEMResult", "cdt_triangulate",
    "cluster_proxies", "extract_polygonal", "qem_simplify",
]

CORNER_ANGLE_DEG = 60.0


@dataclass
class AnchorVertex:
    source: int
    clusters: tuple
    position: np.ndarray


@dataclass
class PolygonalMesh:
    """Anchor vertices and one anchor cycle per cluster.

    ``polygons[k]`` indexes into ``vertices``; ``polygon_cluster[k]`` is the
    cluster it came from and ``proxies[cluster]`` its plane.
    """

    vertices: np.ndarray
    polygons: list
    anchors: list
    polygon_cluster: np.ndarray
    proxies: list
    diagnostics: list = field(default_factory=list)

    @property
    def n_polygons(self) -> int:
        return len(self.polygons)


def cluster_proxies(mesh: TriangleMesh, partition: Partition) -> list[PlaneProxy]:
    """Least-squares plane of every cluster, oriented like its faces."""
    fn = mesh.face_normals(normalize=False)
    ref = np.zeros((partition.n_clusters, 3))
    np.add.at(ref, partition.labels, fn)
    return [proxy_plane(partition.moments(i), ref[i], i) for i in range(partition.n_clusters)]


def _boundary_successors(faces, neighbors, labels):
    """Successor of each cluster-boundary half-edge along its loop.

    Half-edge ``3 * f + k`` runs from corner ``k`` to ``k + 1`` of face ``f``.
    Returns ``(is_boundary (3F,), succ dict)``.
    """
    n_faces = len(faces)
    nb = neighbors
    nb_label = np.where(nb >= 0, labels[np.maximum(nb, 0)], -1)
    is_b = (nb < 0) | (nb_label != labels[:, None])
    is_b = is_b.ravel()
    succ = {}
    faces_l = faces.tolist()
    nb_l = nb.tolist()
    for h in np.flatnonzero(is_b).tolist():
        f, k = divmod(h, 3)
        v = faces_l[f][(k + 1) % 3]
        kk = (k + 1) % 3
        g = f
        for _ in range(n_faces):
            hh = 3 * g + kk
            if is_b[hh]:
                succ[h] = hh
                break
            g = nb_l[g][kk]
            kk = faces_l[g].index(v)
        else:  # pragma: no cover - a fan always closes
            raise RuntimeError("boundary walk did not terminate")
    return is_b, succ


def _loops(succ, faces, labels):
    seen = set()
    loops = defaultdict(list)
    for h in sorted(succ):
        if h in seen:
            continue
        loop = []
        x = h
        while x not in seen:
            seen.add(x)
            loop.append(x)
            x = succ[x]
        f = h // 3
        loops[int(labels[f])].append([int(faces[e // 3, e % 3]) for e in loop])
    return loops


def _open_boundary_corners(mesh: TriangleMesh, adjacency: FaceAdjacency) -> set[int]:
    f_idx, k_idx = np.nonzero(adjacency.neighbors < 0)
    if len(f_idx) == 0:
        return set()
    a = mesh.faces[f_idx, k_idx]
    b = mesh.faces[f_idx, (k_idx + 1) % 3]
    nxt = dict(zip(a.tolist(), b.tolist()))
    prv = dict(zip(b.tolist(), a.tolist()))
    corners = set()
    cos_lim = np.cos(np.radians(CORNER_ANGLE_DEG))
    V = mesh.vertices
    for v in nxt:
        if v not in prv:
            continue
        d0 = V[v] - V[prv[v]]
        d1 = V[nxt[v]] - V[v]
        n0, n1 = np.linalg.norm(d0), np.linalg.norm(d1)
        if n0 > 0 and n1 > 0 and np.dot(d0, d1) / (n0 * n1) < cos_lim:
            corners.add(v)
    return corners


def extract_polygonal(mesh: TriangleMesh, partition: Partition,
                      adjacency: FaceAdjacency | None = None) -> PolygonalMesh:
    """One polygon per cluster with vertices at anchor points.

    Anchors are original vertices where three or more clusters meet, open
    boundary vertices shared by two clusters and sharp open-boundary corners.
    Each anchor is placed at the mean of its projections onto the planes of
    the clusters around it.
    """
    if adjacency is None:
        adjacency = build_adjacency(mesh)
    labels = partition.labels
    faces = mesh.faces
    proxies = cluster_proxies(mesh, partition)

    pairs = np.unique(np.column_stack([faces.ravel(), np.repeat(labels, 3)]), axis=0)
    incident = np.bincount(pairs[:, 0], minlength=mesh.n_vertices)
    vertex_clusters = np.split(pairs[:, 1], np.cumsum(incident)[:-1])

    f_idx, k_idx = np.nonzero(adjacency.neighbors < 0)
    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary[faces[f_idx, k_idx]] = True
    anchor = (incident >= 3) | (on_boundary & (incident >= 2))
    for v in _open_boundary_corners(mesh, adjacency):
        anchor[v] = True

    _, succ = _boundary_successors(faces, adjacency.neighbors, labels)
    loops = _loops(succ, faces, labels)
    diagnostics = []

    # every cluster needs a loop with at least three anchors
    V = mesh.vertices
    for _ in range(partition.n_clusters + 1):
        added = False
        for c in range(partition.n_clusters):
            if c not in loops:
                continue
            loop = max(loops[c], key=len)
            ring = list(dict.fromkeys(loop))
            have = [v for v in ring if anchor[v]]
            if len(have) >= 3 or len(ring) < 3:
                continue
            diagnostics.append(f"cluster {c}: {len(have)} anchors on its boundary, inserting extra anchors")
            pts = V[ring]
            chosen = list(have)
            if not chosen:
                d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
                i, j = np.unravel_index(np.argmax(d), d.shape)
                chosen = [ring[i], ring[j]]
            while len(chosen) < 3:
                d = np.min(np.linalg.norm(pts[:, None] - V[chosen][None], axis=2), axis=1)
                chosen.append(ring[int(np.argmax(d))])
            for v in chosen:
                anchor[v] = True
            added = True
        if not added:
            break

    anchor_ids = np.flatnonzero(anchor)
    index_of = {int(v): k for k, v in enumerate(anchor_ids)}
    positions = np.empty((len(anchor_ids), 3))
    anchors = []
    for k, v in enumerate(anchor_ids.tolist()):
        cl = tuple(int(c) for c in vertex_clusters[v])
        proj = np.array([proxies[c].project(V[v]) for c in cl])
        positions[k] = proj.mean(axis=0)
        anchors.append(AnchorVertex(v, cl, positions[k]))

    polygons, owner = [], []
    for c in range(partition.n_clusters):
        if c not in loops:
            diagnostics.append(f"cluster {c}: no boundary (covers a closed component)")
            continue
        if len(loops[c]) > 1:
            diagnostics.append(f"cluster {c}: {len(loops[c])} boundary loops, keeping the longest")
        loop = max(loops[c], key=len)
        poly = [index_of[v] for v in loop if anchor[v]]
        poly = [p for k, p in enumerate(poly) if p != poly[k - 1]] if len(poly) > 1 else poly
        if len(poly) < 3:
            diagnostics.append(f"cluster {c}: degenerate polygon with {len(poly)} anchors dropped")
            continue
        polygons.append(poly)
        owner.append(c)
    for d in diagnostics:
        logger.info(d)
    return PolygonalMesh(positions, polygons, anchors, np.asarray(owner, dtype=np.int64),
                         proxies, diagnostics)


# --------------------------------------------------------------------------
# per-polygon constrained triangulation
# --------------------------------------------------------------------------

def _orient2d(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _in_circle(a, b, c, d):
    """Positive when ``d`` is inside the circumcircle of CCW triangle ``abc``."""
    m = np.array([[a[0] - d[0], a[1] - d[1], (a[0] - d[0]) ** 2 + (a[1] - d[1]) ** 2],
                  [b[0] - d[0], b[1] - d[1], (b[0] - d[0]) ** 2 + (b[1] - d[1]) ** 2],
                  [c[0] - d[0], c[1] - d[1], (c[0] - d[0]) ** 2 + (c[1] - d[1]) ** 2]])
    return float(np.linalg.det(m))


def _segments_cross(p1, p2, p3, p4):
    d1 = _orient2d(p3, p4, p1)
    d2 = _orient2d(p3, p4, p2)
    d3 = _orient2d(p1, p2, p3)
    d4 = _orient2d(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0


def _self_intersecting(pts) -> bool:
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(a, b, pts[j], pts[(j + 1) % n]):
                return True
    return False


def _point_in_triangle(p, a, b, c):
    return _orient2d(a, b, p) >= 0 and _orient2d(b, c, p) >= 0 and _orient2d(c, a, p) >= 0


def ear_clip(pts) -> list[tuple[int, int, int]] | None:
    """Ear-clipping triangulation of a CCW simple polygon; None if stuck."""
    idx = list(range(len(pts)))
    tris = []
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1e-300)
    tol = 1e-14 * scale * scale
    while len(idx) > 3:
        n = len(idx)
        best = None
        for k in range(n):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
            a, b, c = pts[i0], pts[i1], pts[i2]
            if _orient2d(a, b, c) <= tol:
                continue
            if any(_point_in_triangle(pts[m], a, b, c) for m in idx if m not in (i0, i1, i2)):
                continue
            best = k
            break
        if best is None:
            return None
        k = best
        tris.append((idx[k - 1], idx[k], idx[(k + 1) % n]))
        idx.pop(k)
    tris.append(tuple(idx))
    return tris


def _delaunay_flips(pts, tris, max_rounds=100):
    """Lawson flips restricted to interior diagonals of one polygon."""
    n = len(pts)
    boundary = {frozenset((k, (k + 1) % n)) for k in range(n)}
    tris = [list(t) for t in tris]
    for _ in range(max_rounds):
        flipped = False
        edge_map = defaultdict(list)
        for t_id, t in enumerate(tris):
            for e in range(3):
                edge_map[frozenset((t[e], t[(e + 1) % 3]))].append(t_id)
        for edge, owners in sorted(edge_map.items(), key=lambda kv: sorted(kv[0])):
            if edge in boundary or len(owners) != 2:
                continue
            t1, t2 = tris[owners[0]], tris[owners[1]]
            if len(set(t1) | set(t2)) != 4 or not set(edge) <= set(t1) & set(t2):
                continue
            a = next(v for v in t1 if v not in edge)
            d = next(v for v in t2 if v not in edge)
            # t1 = (a, b, c) CCW with edge (b, c)
            ka = t1.index(a)
            b, c = t1[(ka + 1) % 3], t1[(ka + 2) % 3]
            if _in_circle(pts[a], pts[b], pts[c], pts[d]) <= 1e-15:
                continue
            # flipped triangles (a, b, d) and (a, d, c) must stay CCW
            if _orient2d(pts[a], pts[b], pts[d]) <= 0 or _orient2d(pts[a], pts[d], pts[c]) <= 0:
                continue
            tris[owners[0]] = [a, b, d]
            tris[owners[1]] = [a, d, c]
            flipped = True
            break
        if not flipped:
            break
    return [tuple(t) for t in tris]


def _plane_basis(normal):
    n = np.asarray(normal, dtype=np.float64)
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = np.cross(helper, n)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def triangulate_polygon(points3d, proxy: PlaneProxy):
    """Triangles (local indices) of one anchor polygon and a diagnostic or None."""
    e1, e2 = _plane_basis(proxy.normal)
    q = proxy.project(points3d)
    pts = np.column_stack([q @ e1, q @ e2])
    n = len(pts)
    if n == 3:
        return [(0, 1, 2)], None
    signed = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    reverse = signed < 0
    if reverse:
        pts = pts[::-1]
    tris = None
    note = None
    if _self_intersecting(pts):
        note = "self-intersecting projection"
    else:
        tris = ear_clip(pts)
        if tris is None:
            note = "ear clipping failed"
    if tris is None:
        centroid = pts.mean(axis=0)
        s = int(np.argmin(np.linalg.norm(pts - centroid, axis=1)))
        tris = [(s, (s + k) % n, (s + k + 1) % n) for k in range(1, n - 1)]
    else:
        tris = _delaunay_flips(pts, tris)
    if reverse:
        tris = [(n - 1 - a, n - 1 - b, n - 1 - c) for a, b, c in tris]
    return tris, note


def cdt_triangulate(poly: PolygonalMesh) -> TriangleMesh:
    """Triangulate every polygon inside its proxy plane, keeping polygon edges."""
    faces = []
    for k, p in enumerate(poly.polygons):
        proxy = poly.proxies[int(poly.polygon_cluster[k])]
        tris, note = triangulate_polygon(poly.vertices[p], proxy)
        if note:
            msg = f"cluster {int(poly.polygon_cluster[k])}: {note}, fan fallback"
            poly.diagnostics.append(msg)
            logger.info(msg)
        faces.extend((p[a], p[b], p[c]) for a, b, c in tris)
    return TriangleMesh(poly.vertices.copy(), np.asarray(faces, dtype=np.int64).reshape(-1, 3))


# --------------------------------------------------------------------------
# quadric error metric simplification
# --------------------------------------------------------------------------

@dataclass
class QEMResult:
    mesh: TriangleMesh
    n_vertices: int
    n_faces: int
    reached_target: bool
    error_trace: list


def _face_quadric(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm == 0:
        return np.zeros((4, 4))
    area = 0.5 * norm
    n = n / norm
    plane = np.append(n, -n @ p0)
    return area * np.outer(plane, plane)


def _optimal_point(Q, a, b):
    A = Q[:3, :3]
    rhs = -Q[:3, 3]
    candidates = [a, b, 0.5 * (a + b)]
    scale = np.abs(A).max()
    if scale > 0 and abs(np.linalg.det(A)) > 1e-10 * scale ** 3:
        candidates.insert(0, np.linalg.solve(A, rhs))
    best, best_cost = None, np.inf
    for x in candidates:
        h = np.append(x, 1.0)
        c = float(h @ Q @ h)
        if c < best_cost - 1e-18:
            best, best_cost = x, c
    return best, max(best_cost, 0.0)


def qem_simplify(mesh: TriangleMesh, target_vertices: int | None = None,
                 target_faces: int | None = None, boundary_weight: float = 100.0) -> QEMResult:
    """Greedy quadric-error edge collapse down to a vertex or face budget.

    Collapses that break the link condition, pinch the boundary or flip a
    face normal are rejected. If the target cannot be reached the returned
    mesh has the closest achievable count and ``reached_target`` is False.
    """
    if (target_vertices is None) == (target_faces is None):
        raise ValueError("give exactly one of target_vertices, target_faces")
    V = mesh.vertices.astype(np.float64).copy()
    faces = [list(map(int, f)) for f in mesh.faces]
    n_v = mesh.n_vertices
    if target_vertices is not None and target_vertices > n_v:
        raise ValueError(f"target {target_vertices} exceeds {n_v} vertices")
    if target_faces is not None and target_faces > len(faces):
        raise ValueError(f"target {target_faces} exceeds {len(faces)} faces")

    alive_f = [True] * len(faces)
    vfaces = [set() for _ in range(n_v)]
    for fi, f in enumerate(faces):
        for v in f:
            vfaces[v].add(fi)
    Q = np.zeros((n_v, 4, 4))
    for fi, f in enumerate(faces):
        K = _face_quadric(V[f[0]], V[f[1]], V[f[2]])
        for v in f:
            Q[v] += K

    def edge_faces(u, v):
        return vfaces[u] & vfaces[v]

    # boundary edges get a penalty plane orthogonal to the face through the edge
    edge_count = defaultdict(int)
    for f in faces:
        for k in range(3):
            edge_count[frozenset((f[k], f[(k + 1) % 3]))] += 1
    for f in faces:
        for k in range(3):
            a, b = f[k], f[(k + 1) % 3]
            if edge_count[frozenset((a, b))] == 1:
                fn = np.cross(V[f[1]] - V[f[0]], V[f[2]] - V[f[0]])
                d = V[b] - V[a]
                pn = np.cross(d, fn)
                norm = np.linalg.norm(pn)
                if norm == 0:
                    continue
                pn /= norm
                plane = np.append(pn, -pn @ V[a])
                K = boundary_weight * float(d @ d) * np.outer(plane, plane)
                Q[a] += K
                Q[b] += K
    is_boundary_v = np.zeros(n_v, dtype=bool)
    for e, c in edge_count.items():
        if c == 1:
            is_boundary_v[list(e)] = True

    alive_v = np.ones(n_v, dtype=bool)
    version = np.zeros(n_v, dtype=np.int64)
    n_faces = len(faces)
    n_alive_v = int(np.count_nonzero([len(s) > 0 for s in vfaces]))

    def neighbors(u):
        out = set()
        for fi in vfaces[u]:
            out.update(faces[fi])
        out.discard(u)
        return out

    heap = []

    def push(u, v):
        if u > v:
            u, v = v, u
        x, cost = _optimal_point(Q[u] + Q[v], V[u], V[v])
        # equal costs (flat regions) collapse the shortest edge first
        length2 = float(((V[u] - V[v]) ** 2).sum())
        heapq.heappush(heap, (cost, length2, u, v, int(version[u]), int(version[v]), tuple(x)))

    for u in range(n_v):
        for v in neighbors(u):
            if u < v:
                push(u, v)

    def done():
        if target_vertices is not None:
            return n_alive_v <= target_vertices
        return n_faces <= target_faces

    error = 0.0
    trace = [0.0]
    while not done() and heap:
        cost, _, u, v, vu, vv, x = heapq.heappop(heap)
        if not (alive_v[u] and alive_v[v]) or version[u] != vu or version[v] != vv:
            continue
        shared = edge_faces(u, v)
        if not shared:
            continue
        removes = len(shared)
        if target_faces is not None and n_faces - removes < target_faces:
            continue
        if n_alive_v <= 4:
            break
        # link condition keeps the surface a manifold of the same topology
        if len(neighbors(u) & neighbors(v)) != removes:
            continue
        boundary_edge = removes == 1
        if is_boundary_v[u] and is_boundary_v[v] and not boundary_edge:
            continue
        x = np.asarray(x)
        if not _collapse_keeps_orientation(V, faces, vfaces, u, v, x, shared):
            continue
        # collapse v into u
        for fi in shared:
            alive_f[fi] = False
            for w in faces[fi]:
                vfaces[w].discard(fi)
        for fi in list(vfaces[v]):
            faces[fi] = [u if w == v else w for w in faces[fi]]
            vfaces[u].add(fi)
        vfaces[v] = set()
        alive_v[v] = False
        V[u] = x
        Q[u] = Q[u] + Q[v]
        is_boundary_v[u] = is_boundary_v[u] or is_boundary_v[v]
        n_faces -= removes
        n_alive_v -= 1
        error += cost
        trace.append(error)
        version[u] += 1
        for w in neighbors(u):
            version[w] += 1
        for w in neighbors(u):
            push(u, w)
            for z in neighbors(w):
                if z != u:
                    push(w, z)

    used = np.flatnonzero(alive_v & np.array([len(s) > 0 for s in vfaces]))
    remap = -np.ones(n_v, dtype=np.int64)
    remap[used] = np.arange(len(used))
    out_faces = np.array([[remap[w] for w in faces[fi]] for fi in range(len(faces)) if alive_f[fi]],
                         dtype=np.int64).reshape(-1, 3)
    out = TriangleMesh(V[used], out_faces)
    reached = (target_vertices is None or out.n_vertices == target_vertices) and \
              (target_faces is None or out.n_faces == target_faces)
    if not reached:
        logger.warning("QEM stopped at %d vertices / %d faces", out.n_vertices, out.n_faces)
    return QEMResult(out, out.n_vertices, out.n_faces, reached, trace)


def _collapse_keeps_orientation(V, faces, vfaces, u, v, x, shared):
    ring = [fi for fi in vfaces[u] | vfaces[v] if fi not in shared]
    if not ring:
        return True
    F = np.array([faces[fi] for fi in ring])
    P = V[F]
    old = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    P[(F == u) | (F == v)] = x
    new = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    on = np.linalg.norm(old, axis=1)
    nn = np.linalg.norm(new, axis=1)
    if np.any(nn <= 1e-12 * np.maximum(on, 1e-300)):
        return False
    dots = np.einsum("ij,ij->i", old, new)
    return not np.any((on > 0) & (dots < 0.1 * on * nn))
