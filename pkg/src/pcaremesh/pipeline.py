"""End-to-end remeshing: partition, refine, clean, then polygonal/triangular output."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .cleaning import CleanReport, clean, disconnected_pieces
from .mesh_core import FaceAdjacency, TriangleMesh, build_adjacency, face_moments, normalized
from .meshgen import PolygonalMesh, QEMResult, cdt_triangulate, extract_polygonal, qem_simplify
from .moments import ENERGY_MODES, EnergyParams
from .partition import Partition, initial_partition
from .swap import SwapResult, SwapSchedule, optimize

logger = logging.getLogger(__name__)

OUTPUT_MODES = ("partition", "polygonal", "triangular")


@dataclass
class RunConfig:
    """Pipeline settings. Energy thresholds apply to the bbox-normalized mesh."""

    clusters: int
    mode: str = "partition"
    target_vertices: int | None = None
    target_faces: int | None = None
    energy_mode: str = "pca"
    degenerate_threshold: float = 1e-12
    quality_coefficient: float = 1e-4
    swap_epsilon: float | None = None
    max_swap_iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 1:
            raise ValueError("cluster count must be at least 1")
        if self.mode not in OUTPUT_MODES:
            raise ValueError(f"mode must be one of {OUTPUT_MODES}")
        if self.energy_mode not in ENERGY_MODES:
            raise ValueError(f"energy mode must be one of {ENERGY_MODES}")
        if self.target_vertices is not None and self.target_faces is not None:
            raise ValueError("give at most one of target_vertices, target_faces")
        for name in ("target_vertices", "target_faces"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def energy_params(self) -> EnergyParams:
        return EnergyParams(self.degenerate_threshold, self.quality_coefficient, self.energy_mode)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineResult:
    mesh: TriangleMesh                   # normalized working copy
    center: np.ndarray
    scale: float
    adjacency: FaceAdjacency
    partition: Partition                 # after cleaning
    merge_trace: np.ndarray
    swap: SwapResult
    pieces_before_clean: int
    clean_report: CleanReport
    polygonal: PolygonalMesh | None = None        # original coordinates
    triangulated: TriangleMesh | None = None      # CDT output, original coordinates
    simplified: QEMResult | None = None
    timings_ms: dict = field(default_factory=dict)

    @property
    def energy_trace(self) -> np.ndarray:
        return np.concatenate([self.merge_trace[-1:], self.swap.energy_trace[1:]])

    @property
    def final_mesh(self) -> TriangleMesh | None:
        if self.simplified is not None:
            return self.simplified.mesh
        return self.triangulated


def run_pipeline(mesh: TriangleMesh, config: RunConfig) -> PipelineResult:
    """Run merge, swap and cleaning, then build the requested output."""
    mesh.validate()
    work, center, scale = normalized(mesh)
    params = config.energy_params
    t0 = time.perf_counter()
    adjacency = build_adjacency(work)
    face_data = face_moments(work)
    part = initial_partition(work, adjacency, config.clusters, params, face_data)
    t1 = time.perf_counter()
    schedule = SwapSchedule(config.max_swap_iterations, config.swap_epsilon)
    part, swap = optimize(part, adjacency, schedule, in_place=True)
    t2 = time.perf_counter()
    pieces = disconnected_pieces(part, adjacency)
    part, report = clean(part, adjacency, in_place=True)

    result = PipelineResult(work, center, scale, adjacency, part, part.energy_trace, swap,
                            pieces, report)
    if config.mode != "partition":
        poly = extract_polygonal(work, part, adjacency)
        tri = cdt_triangulate(poly)
        # report geometry in the input's frame
        poly.vertices = poly.vertices * scale + center
        for a in poly.anchors:
            a.position = a.position * scale + center
        tri = TriangleMesh(tri.vertices * scale + center, tri.faces)
        result.polygonal = poly
        result.triangulated = tri
        if config.mode == "triangular" and (config.target_vertices or config.target_faces):
            current = tri.n_vertices if config.target_vertices else tri.n_faces
            target = config.target_vertices or config.target_faces
            if target > current:
                raise ValueError(f"budget {target} exceeds the {current} produced by triangulation")
            result.simplified = qem_simplify(tri, config.target_vertices, config.target_faces)
    t3 = time.perf_counter()
    result.timings_ms = {"merge": 1e3 * (t1 - t0), "swap": 1e3 * (t2 - t1),
                         "mesh": 1e3 * (t3 - t2), "total": 1e3 * (t3 - t0)}
    logger.info("pipeline: %d clusters, %d swaps, %d repairs, %.0f ms", part.n_clusters,
                swap.n_swaps, report.repairs, result.timings_ms["total"])
    return result

