"""Surface partitioning with a covariance-determinant energy, plus remeshing."""

from .cleaning import clean, disconnected_pieces
from .mesh_core import MeshError, TriangleMesh, build_adjacency, load_mesh, write_mesh
from .meshgen import PolygonalMesh, cdt_triangulate, extract_polygonal, qem_simplify
from .metrics import ClosestPointIndex, aspect_ratio_error, one_sided_error, size_distribution
from .moments import ClusterMoments, EnergyParams, PlaneProxy
from .partition import Partition, initial_partition
from .pipeline import RunConfig, run_pipeline
from .shapes import AnalyticSurface, add_normal_noise
from .swap import SwapSchedule, optimize

__version__ = "0.1.0"
