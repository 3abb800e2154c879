"""Approximation error, aspect-ratio error and cluster-size statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .mesh_core import TriangleMesh
from .partition import Partition
from .shapes import AnalyticSurface

DR_BINS = np.linspace(-1.0, 1.0, 41)
LEAF_SIZE = 8


# --------------------------------------------------------------------------
# closest point queries
# --------------------------------------------------------------------------

@njit(cache=True)
def closest_on_triangle(p, a, b, c):
    """Closest point to ``p`` on triangle ``abc`` (Voronoi-region walk)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a.copy()
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b.copy()
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a + v * ab
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c.copy()
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a + w * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w


@njit(cache=True)
def _build(tri_min, tri_max, centers, leaf_size):
    n = len(centers)
    order = np.arange(n)
    cap = 2 * n + 1
    lo = np.empty((cap, 3))
    hi = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    n_nodes = 1
    start[0] = 0
    stop[0] = n
    stack = [0]
    while len(stack) > 0:
        node = stack.pop()
        s, e = start[node], stop[node]
        idx = order[s:e]
        for d in range(3):
            lo[node, d] = tri_min[idx, d].min()
            hi[node, d] = tri_max[idx, d].max()
        if e - s <= leaf_size:
            continue
        cmin = np.empty(3)
        cmax = np.empty(3)
        for d in range(3):
            cmin[d] = centers[idx, d].min()
            cmax[d] = centers[idx, d].max()
        axis = int(np.argmax(cmax - cmin))
        if cmax[axis] - cmin[axis] <= 0.0:
            continue
        srt = np.argsort(centers[idx, axis], kind="mergesort")
        order[s:e] = idx[srt]
        mid = (s + e) // 2
        l_node, r_node = n_nodes, n_nodes + 1
        n_nodes += 2
        start[l_node], stop[l_node] = s, mid
        start[r_node], stop[r_node] = mid, e
        left[node], right[node] = l_node, r_node
        stack.append(r_node)
        stack.append(l_node)
    return order, lo[:n_nodes], hi[:n_nodes], left[:n_nodes], right[:n_nodes], \
        start[:n_nodes], stop[:n_nodes]


@njit(cache=True)
def _box_dist2(p, lo, hi):
    d2 = 0.0
    for k in range(3):
        if p[k] < lo[k]:
            d2 += (lo[k] - p[k]) ** 2
        elif p[k] > hi[k]:
            d2 += (p[k] - hi[k]) ** 2
    return d2


@njit(cache=True)
def _query(points, V, F, order, lo, hi, left, right, start, stop):
    n = len(points)
    dist = np.empty(n)
    face = np.empty(n, dtype=np.int64)
    closest = np.empty((n, 3))
    stack = np.empty(128, dtype=np.int64)
    for q in range(n):
        p = points[q]
        best = np.inf
        best_f = -1
        best_x = np.zeros(3)
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_dist2(p, lo[node], hi[node]) >= best:
                continue
            if left[node] < 0:
                for k in range(start[node], stop[node]):
                    f = order[k]
                    x = closest_on_triangle(p, V[F[f, 0]], V[F[f, 1]], V[F[f, 2]])
                    d2 = ((x - p) ** 2).sum()
                    if d2 < best or (d2 == best and f < best_f):
                        best = d2
                        best_f = f
                        best_x = x
                continue
            a, b = left[node], right[node]
            da = _box_dist2(p, lo[a], hi[a])
            db = _box_dist2(p, lo[b], hi[b])
            # push the farther child first so the nearer one is visited next
            if da <= db:
                stack[top] = b
                stack[top + 1] = a
            else:
                stack[top] = a
                stack[top + 1] = b
            top += 2
        dist[q] = np.sqrt(best)
        face[q] = best_f
        closest[q] = best_x
    return dist, face, closest


class ClosestPointIndex:
    """Bounding-box hierarchy over the triangles of a mesh for exact closest-point queries."""

    def __init__(self, mesh: TriangleMesh, leaf_size: int = LEAF_SIZE):
        if mesh.n_faces == 0:
            raise ValueError("cannot index a mesh without faces")
        self.vertices = np.ascontiguousarray(mesh.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(mesh.faces, dtype=np.int64)
        tri = self.vertices[self.faces]
        self._nodes = _build(tri.min(axis=1), tri.max(axis=1), tri.mean(axis=1), leaf_size)

    def query(self, points):
        """Return ``(distance, face index, closest point)`` for each point."""
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return _query(pts, self.vertices, self.faces, *self._nodes)


def brute_force_distances(points, mesh: TriangleMesh) -> np.ndarray:
    """Exhaustive point-to-mesh distance (reference for small meshes)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    V, F = mesh.vertices.astype(np.float64), mesh.faces
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        out[i] = min(np.linalg.norm(closest_on_triangle(p, V[a], V[b], V[c]) - p) for a, b, c in F)
    return out


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass
class ApproxReport:
    distances: np.ndarray
    mean_error: float
    max_error: float
    bbox_diag: float
    dr: np.ndarray | None = None
    normalized_areas: np.ndarray | None = None
    total_energy: float | None = None
    timings_ms: dict = field(default_factory=dict)


def one_sided_error(original: TriangleMesh, result: TriangleMesh) -> ApproxReport:
    """Distance from every original vertex to ``result``, over the original's bbox diagonal."""
    if original.n_vertices == 0 or result.n_faces == 0:
        raise ValueError("both meshes must be non-empty")
    diag = original.bbox_diagonal
    d, _, _ = ClosestPointIndex(result).query(original.vertices)
    d = d / diag
    return ApproxReport(d, float(d.mean()), float(d.max()), float(diag))


def aspect_ratios(partition: Partition) -> np.ndarray:
    """Square root of the ratio of the two largest covariance eigenvalues per cluster."""
    w = np.linalg.eigvalsh(partition.cov)[:, ::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(w[:, 0] / np.maximum(w[:, 1], 0.0))


@dataclass
class AspectRatioResult:
    dr: np.ndarray              # nan where excluded
    r_measured: np.ndarray
    r_theory: np.ndarray
    excluded: np.ndarray        # cluster ids with k_min ~ 0
    histogram: np.ndarray
    bins: np.ndarray = field(default_factory=lambda: DR_BINS.copy())


def aspect_ratio_error(partition: Partition, surface: AnalyticSurface, scale: float = 1.0,
                       center=None, kmin_tol: float = 1e-9) -> AspectRatioResult:
    """Relative error between measured and curvature-predicted cluster stretch.

    ``scale`` and ``center`` map partition coordinates back to the surface's
    frame (``x_surface = x * scale + center``) when the mesh was normalized.
    """
    c = partition.centroid * scale + (0.0 if center is None else np.asarray(center))
    foot = surface.project(c)
    kmax, kmin = surface.principal_curvatures(foot)
    r_m = aspect_ratios(partition)
    bad = np.abs(kmin) <= kmin_tol * np.maximum(np.abs(kmax), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_t = np.sqrt(np.abs(kmax / kmin))
        dr = (r_m - r_t) / r_t
    dr[bad] = np.nan
    hist, _ = np.histogram(dr[~bad], bins=DR_BINS)
    return AspectRatioResult(dr, r_m, r_t, np.flatnonzero(bad), hist)


@dataclass
class SizeResult:
    scaled: np.ndarray          # area * sqrt(K), nan where K <= 0
    cv_scaled: float
    cv_area: float
    excluded: np.ndarray


def coefficient_of_variation(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.std(x) / np.mean(x)) if len(x) else float("nan")


def size_distribution(partition: Partition, surface: AnalyticSurface, scale: float = 1.0,
                      center=None, clusters=None) -> SizeResult:
    """``area * sqrt(K)`` at each projected centroid and the CVs of it and of raw area.

    Areas are converted to the surface frame with ``scale``; ``clusters``
    restricts the statistics (e.g. to interior clusters).
    """
    ids = np.arange(partition.n_clusters) if clusters is None else np.asarray(clusters)
    c = partition.centroid[ids] * scale + (0.0 if center is None else np.asarray(center))
    K = surface.gaussian_curvature(surface.project(c))
    area = partition.area[ids] * scale ** 2
    ok = K > 0
    scaled = np.full(len(ids), np.nan)
    scaled[ok] = area[ok] * np.sqrt(K[ok])
    return SizeResult(scaled, coefficient_of_variation(scaled[ok]),
                      coefficient_of_variation(area[ok]), ids[~ok])


def interior_clusters(partition: Partition, adjacency) -> np.ndarray:
    """Clusters with no face on the open boundary of the mesh."""
    boundary_faces = np.flatnonzero(adjacency.boundary.any(axis=1))
    touching = np.zeros(partition.n_clusters, dtype=bool)
    touching[np.unique(partition.labels[boundary_faces])] = True
    return np.flatnonzero(~touching)


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def build_report(original: TriangleMesh, output_counts: dict, energy_trace, approx: ApproxReport | None,
                 dr: AspectRatioResult | None, size: SizeResult | None, timings_ms: dict,
                 config: dict | None = None, extra: dict | None = None) -> dict:
    """Assemble the JSON report dictionary (NaN/inf become null)."""
    report = {
        "input": {"vertices": original.n_vertices, "faces": original.n_faces,
                  "bbox_diag": original.bbox_diagonal},
        "output": output_counts,
        "energy_trace": list(energy_trace),
        "mean_error": approx.mean_error if approx else None,
        "max_error": approx.max_error if approx else None,
        "dr_histogram": {"bins": DR_BINS, "counts": dr.histogram} if dr else None,
        "size_cv": {"area_sqrt_k": size.cv_scaled, "area": size.cv_area} if size else None,
        "timings_ms": timings_ms,
    }
    if config is not None:
        report["config"] = config
    if extra:
        report.update(extra)
    return _clean(report)


def dump_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def projected_cluster_areas(partition: Partition, mesh: TriangleMesh, axis: int = 2) -> np.ndarray:
    """Cluster areas projected onto the coordinate plane orthogonal to ``axis``.

    For a height field over the xy-plane this is the cluster's area in the
    parameter domain.
    """
    n = mesh.face_normals()
    return np.bincount(partition.labels, weights=partition.face_area * np.abs(n[:, axis]),
                       minlength=partition.n_clusters)
