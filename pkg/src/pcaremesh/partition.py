"""Partition state and the greedy merging initializer.

Merging starts from one cluster per face and repeatedly contracts the
adjacent cluster pair whose union raises the total energy the least, until
``n`` clusters remain. Candidates live in a binary heap keyed by
``(cost, min_id, max_id)``; entries whose generation stamps no longer match
the clusters are discarded when popped instead of being deleted eagerly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import heapq

import numpy as np
from numba import njit
from numba.typed import List

from . import _kernels as K
from .mesh_core import FaceAdjacency, TriangleMesh, face_components, face_moments
from .moments import ClusterMoments, EnergyParams

logger = logging.getLogger(__name__)


class PartitionError(ValueError):
    pass


@dataclass
class Partition:
    """Face-to-cluster assignment with per-cluster moments.

    Cluster ids are ``0 .. n_clusters - 1``. The per-face moment arrays are
    shared with the optimizers and never modified.
    """

    labels: np.ndarray
    area: np.ndarray
    centroid: np.ndarray
    cov: np.ndarray
    count: np.ndarray
    face_area: np.ndarray = field(repr=False)
    face_centroid: np.ndarray = field(repr=False)
    face_cov: np.ndarray = field(repr=False)
    params: EnergyParams = EnergyParams()
    energy_trace: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_labels(cls, mesh: TriangleMesh, labels, params: EnergyParams = EnergyParams(),
                    face_data=None) -> "Partition":
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        fa, fc, fU = face_data if face_data is not None else face_moments(mesh)
        n = int(labels.max()) + 1
        area, cen, cov, count = K.direct_moments(labels, n, fa, fc, fU)
        if (count == 0).any():
            raise PartitionError("cluster ids must be contiguous and non-empty")
        return cls(labels, area, cen, cov, count, fa, fc, fU, params)

    @property
    def n_clusters(self) -> int:
        return len(self.area)

    @property
    def n_faces(self) -> int:
        return len(self.labels)

    def moments(self, i: int) -> ClusterMoments:
        return ClusterMoments(float(self.area[i]), self.centroid[i].copy(), self.cov[i].copy(),
                              int(self.count[i]))

    def faces_of(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.labels == i)

    def cluster_faces(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.n_clusters + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.n_clusters)]

    def energies(self) -> np.ndarray:
        p = self.params
        return np.array([K.energy(self.area[i], self.cov[i], p.mode_code, p.degenerate_threshold,
                                  p.quality_coefficient) for i in range(self.n_clusters)])

    def total_energy(self) -> float:
        return float(self.energies().sum())

    def recomputed(self):
        """From-scratch ``(area, centroid, cov, count)`` by direct summation."""
        return K.direct_moments(self.labels, self.n_clusters, self.face_area,
                                self.face_centroid, self.face_cov)

    def cluster_adjacency(self, adjacency: FaceAdjacency) -> set[tuple[int, int]]:
        nb = adjacency.neighbors
        rows = np.repeat(self.labels, 3)
        cols = np.where(nb.ravel() >= 0, self.labels[nb.ravel()], -1)
        keep = (cols >= 0) & (rows != cols)
        lo = np.minimum(rows[keep], cols[keep])
        hi = np.maximum(rows[keep], cols[keep])
        return set(zip(lo.tolist(), hi.tolist()))

    def component_counts(self, adjacency: FaceAdjacency) -> np.ndarray:
        """Number of edge-connected pieces of every cluster."""
        nb = adjacency.neighbors
        same = (nb >= 0) & (self.labels[np.maximum(nb, 0)] == self.labels[:, None])
        _, comp = face_components(nb, same)
        pairs = np.unique(np.stack([self.labels, comp], axis=1), axis=0)
        return np.bincount(pairs[:, 0], minlength=self.n_clusters)

    def copy(self) -> "Partition":
        return Partition(self.labels.copy(), self.area.copy(), self.centroid.copy(),
                         self.cov.copy(), self.count.copy(), self.face_area, self.face_centroid,
                         self.face_cov, self.params,
                         None if self.energy_trace is None else self.energy_trace.copy())


@dataclass
class MergeLog:
    """Executed merges in order: ``pairs[k] = (kept, absorbed)`` root face ids."""

    pairs: np.ndarray
    costs: np.ndarray


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _greedy_merge(neighbors, fa, fc, fU, n_target, mode, t, alpha):
    n_faces = len(fa)
    area = fa.copy()
    cen = fc.copy()
    cov = fU.copy()
    gen = np.zeros(n_faces, dtype=np.int64)
    parent = np.arange(n_faces)
    mark = np.full(n_faces, -1, dtype=np.int64)
    energy = np.empty(n_faces)
    for f in range(n_faces):
        energy[f] = K.energy(area[f], cov[f], mode, t, alpha)

    nbrs = List()
    for f in range(n_faces):
        m = 0
        for k in range(3):
            if neighbors[f, k] >= 0:
                m += 1
        arr = np.empty(m, dtype=np.int64)
        m = 0
        for k in range(3):
            if neighbors[f, k] >= 0:
                arr[m] = neighbors[f, k]
                m += 1
        nbrs.append(arr)

    tmp_c = np.empty(3)
    tmp_U = np.empty((3, 3))
    heap = [(0.0, 0, 0, 0, 0)]
    heap.pop()
    for f in range(n_faces):
        for k in range(3):
            g = neighbors[f, k]
            if g > f:
                a = K.merge_into(area[f], cen[f], cov[f], area[g], cen[g], cov[g], tmp_c, tmp_U)
                cost = K.energy(a, tmp_U, mode, t, alpha) - energy[f] - energy[g]
                heap.append((cost, f, g, 0, 0))
    heapq.heapify(heap)

    n_merges = max(n_faces - n_target, 0)
    total = energy.sum()
    trace = np.empty(n_merges + 1)
    trace[0] = total
    log_pairs = np.empty((n_merges, 2), dtype=np.int64)
    log_costs = np.empty(n_merges)
    alive = n_faces
    step = 0
    while alive > n_target and len(heap) > 0:
        cost, i, j, gi, gj = heapq.heappop(heap)
        if parent[i] != i or parent[j] != j or gen[i] != gi or gen[j] != gj:
            continue
        # i < j always; i keeps its id
        area[i] = K.merge_into(area[i], cen[i], cov[i], area[j], cen[j], cov[j], cen[i], cov[i])
        energy[i] = K.energy(area[i], cov[i], mode, t, alpha)
        parent[j] = i
        gen[i] += 1
        gen[j] += 1
        alive -= 1
        total += cost
        log_pairs[step, 0] = i
        log_pairs[step, 1] = j
        log_costs[step] = cost
        step += 1
        trace[step] = total

        a_list = nbrs[i]
        b_list = nbrs[j]
        merged = np.empty(len(a_list) + len(b_list), dtype=np.int64)
        m = 0
        mark[i] = step
        for src in (a_list, b_list):
            for x in src:
                r = _find(parent, x)
                if mark[r] != step:
                    mark[r] = step
                    merged[m] = r
                    m += 1
        merged = merged[:m].copy()
        nbrs[i] = merged
        nbrs[j] = np.empty(0, dtype=np.int64)
        for r in merged:
            a = K.merge_into(area[i], cen[i], cov[i], area[r], cen[r], cov[r], tmp_c, tmp_U)
            c = K.energy(a, tmp_U, mode, t, alpha) - energy[i] - energy[r]
            if i < r:
                heapq.heappush(heap, (c, i, r, gen[i], gen[r]))
            else:
                heapq.heappush(heap, (c, r, i, gen[r], gen[i]))

    roots = np.empty(n_faces, dtype=np.int64)
    for f in range(n_faces):
        roots[f] = _find(parent, f)
    return roots, area, cen, cov, trace[:step + 1], log_pairs[:step], log_costs[:step], alive


def initial_partition(mesh: TriangleMesh, adjacency: FaceAdjacency, n: int,
                      params: EnergyParams = EnergyParams(), face_data=None,
                      return_log: bool = False):
    """Greedy least-cost merging from single faces down to ``n`` clusters.

    Returns the :class:`Partition`, and a :class:`MergeLog` as well when
    ``return_log`` is true.
    """
    n_faces = mesh.n_faces
    if not 1 <= n <= n_faces:
        raise PartitionError(f"cluster count {n} outside [1, {n_faces}]")
    n_comp, _ = adjacency.components()
    if n < n_comp:
        raise PartitionError(f"cluster count {n} below the {n_comp} connected components")
    fa, fc, fU = face_data if face_data is not None else face_moments(mesh)
    roots, area, cen, cov, trace, pairs, costs, alive = _greedy_merge(
        adjacency.neighbors, fa, fc, fU, n, params.mode_code,
        params.degenerate_threshold, params.quality_coefficient)
    if alive != n:
        raise PartitionError(f"merging stalled at {alive} clusters")
    uniq, labels = np.unique(roots, return_inverse=True)
    count = np.bincount(labels, minlength=len(uniq))
    part = Partition(labels.astype(np.int64), area[uniq].copy(), cen[uniq].copy(),
                     cov[uniq].copy(), count, fa, fc, fU, params, trace)
    logger.debug("merged %d faces into %d clusters, energy %.6g", n_faces, n, trace[-1])
    if return_log:
        return part, MergeLog(pairs, costs)
    return part
