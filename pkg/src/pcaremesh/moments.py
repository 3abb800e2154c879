"""Mergeable cluster statistics and the cluster energies built on them.

A cluster is summarized by its area, area centroid and centered covariance
``U = integral (p - c)(p - c)^T dA``. Merging and splitting regions only needs
these three quantities (parallel-axis shifts), so every update is O(1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

ENERGY_MODES = ("pca", "plane_fitting_baseline")


@dataclass(frozen=True)
class EnergyParams:
    """Energy configuration.

    ``degenerate_threshold`` is compared with ``det(U) / area**5`` and
    ``quality_coefficient`` weights the trace energy of planar clusters. Both
    are in units of a mesh scaled to unit bounding-box diagonal.
    """

    degenerate_threshold: float = 1e-12
    quality_coefficient: float = 1e-4
    energy_mode: str = "pca"

    def __post_init__(self):
        if not self.degenerate_threshold >= 0:
            raise ValueError("degenerate_threshold must be non-negative")
        if not self.quality_coefficient > 0:
            raise ValueError("quality_coefficient must be positive")
        if self.energy_mode not in ENERGY_MODES:
            raise ValueError(f"energy_mode must be one of {ENERGY_MODES}")

    @property
    def mode_code(self) -> int:
        return K.MODE_PCA if self.energy_mode == "pca" else K.MODE_PLANE


@dataclass(frozen=True)
class ClusterMoments:
    area: float = 0.0
    centroid: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    face_count: int = 0

    @classmethod
    def empty(cls) -> "ClusterMoments":
        return cls()

    @classmethod
    def from_triangle(cls, a, b, c) -> "ClusterMoments":
        from .mesh_core import triangle_moments

        tm = triangle_moments(a, b, c)
        return cls(tm.area, tm.centroid, tm.cov, 1)

    @classmethod
    def from_faces(cls, areas, centroids, covs) -> "ClusterMoments":
        """Direct summation over per-face moments (no incremental updates)."""
        areas = np.asarray(areas, dtype=np.float64)
        centroids = np.asarray(centroids, dtype=np.float64).reshape(-1, 3)
        covs = np.asarray(covs, dtype=np.float64).reshape(-1, 3, 3)
        area = float(areas.sum())
        if area <= 0:
            return cls(0.0, np.zeros(3), np.zeros((3, 3)), len(areas))
        c = (areas[:, None] * centroids).sum(axis=0) / area
        d = centroids - c
        cov = covs.sum(axis=0) + np.einsum("f,fi,fj->ij", areas, d, d)
        return cls(area, c, cov, len(areas))

    @property
    def det(self) -> float:
        return float(K.det3(self.cov))

    @property
    def trace(self) -> float:
        return float(np.trace(self.cov))

    def eigenvalues(self) -> np.ndarray:
        """Covariance eigenvalues, largest first."""
        return np.linalg.eigvalsh(self.cov)[::-1]


def merge(m1: ClusterMoments, m2: ClusterMoments) -> ClusterMoments:
    c = np.empty(3)
    U = np.empty((3, 3))
    a = K.merge_into(m1.area, m1.centroid, m1.cov, m2.area, m2.centroid, m2.cov, c, U)
    return ClusterMoments(float(a), c, U, m1.face_count + m2.face_count)


def split(whole: ClusterMoments, part: ClusterMoments) -> ClusterMoments:
    """Moments of ``whole`` minus its subregion ``part``."""
    if part.area <= 0:
        return whole
    c = np.empty(3)
    U = np.empty((3, 3))
    a = K.split_into(whole.area, whole.centroid, whole.cov, part.area, part.centroid, part.cov, c, U)
    if a <= 0:
        raise ValueError(f"split leaves non-positive area {a:.3g}")
    return ClusterMoments(float(a), c, U, whole.face_count - part.face_count)


def pca_energy(m: ClusterMoments, params: EnergyParams = EnergyParams()) -> float:
    """``det(U)/area^4``, or ``alpha*trace(U)*area`` for near-planar clusters."""
    return float(K.energy(m.area, m.cov, K.MODE_PCA, params.degenerate_threshold,
                          params.quality_coefficient))


def is_degenerate(m: ClusterMoments, params: EnergyParams = EnergyParams()) -> bool:
    return bool(K.is_degenerate(m.area, m.cov, params.degenerate_threshold))


def plane_fitting_energy(m: ClusterMoments) -> float:
    """Smallest covariance eigenvalue: the integrated squared distance to the best plane."""
    return float(np.linalg.eigvalsh(m.cov)[0])


def cluster_energy(m: ClusterMoments, params: EnergyParams = EnergyParams()) -> float:
    if params.energy_mode == "pca":
        return pca_energy(m, params)
    return plane_fitting_energy(m)


def merge_cost(m1: ClusterMoments, m2: ClusterMoments, params: EnergyParams = EnergyParams()) -> float:
    return (cluster_energy(merge(m1, m2), params)
            - cluster_energy(m1, params) - cluster_energy(m2, params))


@dataclass(frozen=True)
class PlaneProxy:
    """Plane ``normal . x + offset = 0`` fitted to one cluster."""

    normal: np.ndarray
    offset: float
    cluster_id: int = -1
    ambiguous: bool = False

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points) @ self.normal + self.offset

    def project(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points - np.multiply.outer(self.signed_distance(points), self.normal)


def proxy_plane(m: ClusterMoments, reference_normal=None, cluster_id: int = -1) -> PlaneProxy:
    """Least-squares plane through the centroid.

    The normal is the eigenvector of the smallest covariance eigenvalue, flipped
    to agree with ``reference_normal`` (normally the area-weighted mean face
    normal of the cluster) when one is given.
    """
    if not m.area > 0:
        raise ValueError("proxy of an empty cluster")
    w, V = np.linalg.eigh(m.cov)
    n = V[:, 0].copy()
    tr = max(float(w.sum()), 0.0)
    ambiguous = bool(w[1] - w[0] <= 1e-9 * tr)
    if reference_normal is not None:
        if float(np.dot(n, reference_normal)) < 0:
            n = -n
    else:
        # largest-magnitude component positive
        if n[np.argmax(np.abs(n))] < 0:
            n = -n
    n /= np.linalg.norm(n)
    return PlaneProxy(n, -float(n @ m.centroid), cluster_id, ambiguous)
