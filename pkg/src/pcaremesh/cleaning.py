"""Make every cluster a single edge-connected set of faces."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .mesh_core import FaceAdjacency, face_components
from .moments import ClusterMoments, merge, merge_cost, split
from .partition import Partition

logger = logging.getLogger(__name__)


@dataclass
class CleanReport:
    repairs: int = 0
    faces_moved: int = 0
    # hanging pieces with no foreign neighbor (only on multi-component meshes)
    stranded: list = field(default_factory=list)


def _same_cluster_components(labels, neighbors):
    same = (neighbors >= 0) & (labels[np.maximum(neighbors, 0)] == labels[:, None])
    return face_components(neighbors, same)


def disconnected_pieces(partition: Partition, adjacency: FaceAdjacency) -> int:
    """Total number of components beyond the first, summed over clusters."""
    n_comp, _ = _same_cluster_components(partition.labels, adjacency.neighbors)
    return int(n_comp - partition.n_clusters)


def clean(partition: Partition, adjacency: FaceAdjacency, in_place: bool = False,
          max_rounds: int = 100):
    """Merge every hanging component into its least-cost neighboring cluster.

    The main component of a cluster (largest area, then most faces, then
    lowest face id) keeps its id. Returns ``(partition, CleanReport)``; when
    nothing needs repair the input arrays are returned untouched.
    """
    part = partition if in_place else partition.copy()
    report = CleanReport()
    nb = adjacency.neighbors
    params = part.params
    stranded: set[int] = set()
    for _ in range(max_rounds):
        n_comp, comp = _same_cluster_components(part.labels, nb)
        if n_comp == part.n_clusters:
            break
        comp_area = np.bincount(comp, weights=part.face_area, minlength=n_comp)
        comp_size = np.bincount(comp, minlength=n_comp)
        comp_first = np.full(n_comp, len(comp), dtype=np.int64)
        np.minimum.at(comp_first, comp, np.arange(len(comp)))
        comp_label = part.labels[comp_first]

        # main component per cluster: largest area, most faces, lowest face id
        order = np.lexsort((comp_first, -comp_size, -comp_area, comp_label))
        first_of_cluster = np.ones(n_comp, dtype=bool)
        first_of_cluster[1:] = comp_label[order][1:] != comp_label[order][:-1]
        hanging = np.sort(comp_first[order[~first_of_cluster]])
        progress = False
        for start in hanging:
            c = comp[start]
            faces = np.flatnonzero(comp == c)
            if int(start) in stranded:
                continue
            own = int(part.labels[start])
            around = nb[faces].ravel()
            around = around[around >= 0]
            foreign = np.unique(part.labels[around])
            foreign = foreign[foreign != own]
            if len(foreign) == 0:
                # either a whole mesh component, or reattached by an earlier move this round
                if np.isin(around, faces).all():
                    stranded.add(int(start))
                continue
            piece = ClusterMoments.from_faces(part.face_area[faces], part.face_centroid[faces],
                                              part.face_cov[faces])
            costs = [merge_cost(piece, part.moments(int(j)), params) for j in foreign]
            target = int(foreign[int(np.argmin(costs))])  # argmin takes lowest id on ties
            _move(part, own, target, piece)
            part.labels[faces] = target
            report.repairs += 1
            report.faces_moved += len(faces)
            progress = True
        if not progress:
            break
    report.stranded = sorted(stranded)
    if report.repairs:
        logger.debug("cleaning moved %d faces in %d pieces", report.faces_moved, report.repairs)
    return part, report


def _move(part: Partition, src: int, dst: int, piece: ClusterMoments) -> None:
    rest = split(part.moments(src), piece)
    grown = merge(part.moments(dst), piece)
    for idx, m in ((src, rest), (dst, grown)):
        part.area[idx] = m.area
        part.centroid[idx] = m.centroid
        part.cov[idx] = m.cov
        part.count[idx] = m.face_count
