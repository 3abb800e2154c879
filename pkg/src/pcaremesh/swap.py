"""Variational refinement by swapping boundary triangles between clusters."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _kernels as K
from .mesh_core import FaceAdjacency
from .partition import Partition

logger = logging.getLogger(__name__)


@dataclass
class SwapSchedule:
    """Stopping rules for :func:`optimize`.

    ``epsilon`` is the minimum energy decrease for a swap to be accepted. When
    ``None`` it is ``relative_epsilon`` times the total energy at the start of
    the optimization.
    """

    max_iterations: int = 1000
    epsilon: float | None = None
    relative_epsilon: float = 1e-14
    record_swaps: bool = False

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


@dataclass
class SwapResult:
    energy_trace: np.ndarray
    iterations: int
    converged: bool
    n_swaps: int
    epsilon: float
    # populated only with SwapSchedule.record_swaps: (face, from, to) and predicted deltas
    swaps: np.ndarray | None = None
    deltas: np.ndarray | None = None


@njit(cache=True)
def _swap_passes(neighbors, labels, fa, fc, fU, area, cen, cov, count, mode, t, alpha,
                 eps, max_iter, record):
    n_faces = len(labels)
    n = len(area)
    E = np.empty(n)
    for i in range(n):
        E[i] = K.energy(area[i], cov[i], mode, t, alpha)
    total = E.sum()
    trace = [total]

    # a face is re-evaluated only if a cluster it touches changed since its last visit
    clock = 1
    modstamp = np.ones(n, dtype=np.int64)
    evalstamp = np.zeros(n_faces, dtype=np.int64)

    log_swaps = [(0, 0, 0)]
    log_deltas = [0.0]
    log_swaps.pop()
    log_deltas.pop()

    ri_c = np.empty(3)
    ri_U = np.empty((3, 3))
    rj_c = np.empty(3)
    rj_U = np.empty((3, 3))
    best_c = np.empty(3)
    best_U = np.empty((3, 3))
    cand = np.empty(3, dtype=np.int64)

    n_swaps = 0
    iterations = 0
    converged = False
    for it in range(max_iter):
        iterations += 1
        accepted = 0
        for f in range(n_faces):
            i = labels[f]
            nc = 0
            stamp = modstamp[i]
            for k in range(3):
                g = neighbors[f, k]
                if g < 0:
                    continue
                j = labels[g]
                if j == i:
                    continue
                dup = False
                for q in range(nc):
                    if cand[q] == j:
                        dup = True
                if not dup:
                    cand[nc] = j
                    nc += 1
                    if modstamp[j] > stamp:
                        stamp = modstamp[j]
            if nc == 0 or stamp <= evalstamp[f]:
                continue
            evalstamp[f] = clock
            if count[i] <= 1:
                continue
            ai = K.split_into(area[i], cen[i], cov[i], fa[f], fc[f], fU[f], ri_c, ri_U)
            if ai <= 0.0:
                continue
            Ei = K.energy(ai, ri_U, mode, t, alpha)
            best = 0.0
            bestj = -1
            bestE = 0.0
            best_a = 0.0
            for q in range(nc):
                j = cand[q]
                aj = K.merge_into(area[j], cen[j], cov[j], fa[f], fc[f], fU[f], rj_c, rj_U)
                Ej = K.energy(aj, rj_U, mode, t, alpha)
                delta = (Ei - E[i]) + (Ej - E[j])
                if bestj < 0 or delta < best or (delta == best and j < bestj):
                    best = delta
                    bestj = j
                    bestE = Ej
                    best_a = aj
                    best_c[:] = rj_c
                    best_U[:, :] = rj_U
            if bestj < 0 or not best < -eps:
                continue
            j = bestj
            area[i] = ai
            cen[i, :] = ri_c
            cov[i, :, :] = ri_U
            count[i] -= 1
            area[j] = best_a
            cen[j, :] = best_c
            cov[j, :, :] = best_U
            count[j] += 1
            labels[f] = j
            E[i] = Ei
            E[j] = bestE
            total += best
            clock += 1
            modstamp[i] = clock
            modstamp[j] = clock
            accepted += 1
            n_swaps += 1
            if record:
                log_swaps.append((f, i, j))
                log_deltas.append(best)
        trace.append(total)
        if accepted == 0:
            converged = True
            break

    swaps = np.empty((len(log_swaps), 3), dtype=np.int64)
    deltas = np.empty(len(log_deltas))
    for k in range(len(log_swaps)):
        swaps[k, 0] = log_swaps[k][0]
        swaps[k, 1] = log_swaps[k][1]
        swaps[k, 2] = log_swaps[k][2]
        deltas[k] = log_deltas[k]
    return np.array(trace), iterations, converged, n_swaps, swaps, deltas


def optimize(partition: Partition, adjacency: FaceAdjacency,
             schedule: SwapSchedule = SwapSchedule(), in_place: bool = False):
    """Swap boundary triangles to neighboring clusters while the energy drops.

    Each visited face (ascending id) moves to the adjacent cluster giving the
    most negative energy change, provided the change is below ``-epsilon`` and
    its own cluster keeps at least one face. Passes repeat until one accepts
    nothing or ``max_iterations`` is reached.

    Returns ``(partition, SwapResult)``.
    """
    part = partition if in_place else partition.copy()
    if part.n_clusters < 2:
        trace = np.array([part.total_energy()])
        return part, SwapResult(trace, 0, True, 0, 0.0)
    p = part.params
    eps = schedule.epsilon
    if eps is None:
        eps = schedule.relative_epsilon * abs(part.total_energy())
    trace, iterations, converged, n_swaps, swaps, deltas = _swap_passes(
        adjacency.neighbors, part.labels, part.face_area, part.face_centroid, part.face_cov,
        part.area, part.centroid, part.cov, part.count, p.mode_code, p.degenerate_threshold,
        p.quality_coefficient, eps, schedule.max_iterations, schedule.record_swaps)
    logger.debug("swap: %d swaps in %d passes, converged=%s", n_swaps, iterations, converged)
    result = SwapResult(trace, int(iterations), bool(converged), int(n_swaps), float(eps))
    if schedule.record_swaps:
        result.swaps, result.deltas = swaps, deltas
    return part, result
