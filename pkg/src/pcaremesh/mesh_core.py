"""Triangle mesh container, OBJ/PLY I/O, face adjacency and exact triangle moments.

The surface moments of a triangle are integrals over its area, not sums over
its corners. For a triangle with corners ``v_k`` and centroid ``g`` the second
barycentric moments of the 2-simplex give the closed form::

    cov = area / 12 * sum_k (v_k - g)(v_k - g)^T

which is what :func:`triangle_moments` and :func:`face_moments` evaluate.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph


class MeshError(ValueError):
    """Raised for malformed, non-manifold or otherwise unusable meshes."""


@dataclass
class TriangleMesh:
    """Indexed triangle mesh.

    Parameters
    ----------
    vertices : (V, 3) float array
    faces : (F, 3) int array, counter-clockwise seen from outside
    colors : optional (F, 3) uint8 array of per-face RGB
    """

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(-1, 3)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def bbox_diagonal(self) -> float:
        if self.n_vertices == 0:
            return 0.0
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    @property
    def bbox_center(self) -> np.ndarray:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return 0.5 * (lo + hi)

    def face_normals(self, normalize: bool = True) -> np.ndarray:
        """Face normals; unnormalized they have length twice the face area."""
        v = self.vertices[self.faces]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if normalize:
            length = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.where(length > 0, length, 1.0)
        return n

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(normalize=False), axis=1)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals."""
        fn = self.face_normals(normalize=False)
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.faces[:, k], fn)
        length = np.linalg.norm(vn, axis=1, keepdims=True)
        return vn / np.where(length > 0, length, 1.0)

    def copy(self) -> "TriangleMesh":
        colors = None if self.colors is None else self.colors.copy()
        return TriangleMesh(self.vertices.copy(), self.faces.copy(), colors)

    def validate(self) -> "TriangleMesh":
        """Check index range, repeated corners, edge manifoldness and extent.

        Returns the mesh itself so calls can be chained.
        """
        if self.n_faces == 0 or self.n_vertices == 0:
            raise MeshError("empty mesh")
        if self.faces.min() < 0 or self.faces.max() >= self.n_vertices:
            raise MeshError("face index out of range")
        f = self.faces
        bad = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        if bad.any():
            raise MeshError(f"face {int(np.flatnonzero(bad)[0])} has repeated vertices")
        if not self.bbox_diagonal > 0:
            raise MeshError("degenerate bounding box")
        _edge_table(self.faces, self.n_vertices)
        return self


@dataclass(frozen=True)
class TriangleMoments:
    area: float
    centroid: np.ndarray
    cov: np.ndarray


@dataclass
class FaceAdjacency:
    """Edge neighbors per face.

    ``neighbors[f, k]`` is the face across edge ``k`` of face ``f`` (the edge
    from corner ``k`` to corner ``k + 1``), or -1 on an open boundary.
    """

    neighbors: np.ndarray
    edge_ids: np.ndarray = field(repr=False)
    n_edges: int = 0

    @property
    def boundary(self) -> np.ndarray:
        return self.neighbors < 0

    def degree(self) -> np.ndarray:
        return (self.neighbors >= 0).sum(axis=1)

    def components(self) -> tuple[int, np.ndarray]:
        """Edge-connected face components as ``(count, labels)``."""
        return face_components(self.neighbors)


def _edge_table(faces: np.ndarray, n_vertices: int):
    """Unique undirected edges of a face array.

    Returns ``(keys, inverse, counts)`` with ``inverse`` shaped (F, 3).
    """
    a = faces
    b = np.roll(faces, -1, axis=1)
    lo = np.minimum(a, b).ravel()
    hi = np.maximum(a, b).ravel()
    keys = lo * np.int64(n_vertices) + hi
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if counts.size and counts.max() > 2:
        e = int(np.flatnonzero(counts > 2)[0])
        u, v = divmod(int(uniq[e]), n_vertices)
        raise MeshError(f"non-manifold edge {e} ({u}, {v}) shared by {int(counts[e])} faces")
    return uniq, inverse.reshape(-1, 3), counts


def build_adjacency(mesh: TriangleMesh) -> FaceAdjacency:
    n_faces = mesh.n_faces
    _, inverse, counts = _edge_table(mesh.faces, mesh.n_vertices)
    flat = inverse.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_edges = flat[order]
    neighbors = np.full(3 * n_faces, -1, dtype=np.int64)
    # interior edges occupy two consecutive slots after sorting
    pair = np.flatnonzero(sorted_edges[1:] == sorted_edges[:-1])
    s0, s1 = order[pair], order[pair + 1]
    neighbors[s0] = s1 // 3
    neighbors[s1] = s0 // 3
    return FaceAdjacency(neighbors.reshape(n_faces, 3), inverse, len(counts))


def face_components(neighbors: np.ndarray, mask: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Connected components of the face graph, optionally cutting edges.

    ``mask`` is an optional (F, 3) boolean array; only edges where it is true
    are kept.
    """
    n = len(neighbors)
    rows = np.repeat(np.arange(n), 3)
    cols = neighbors.ravel()
    keep = cols >= 0
    if mask is not None:
        keep &= mask.ravel()
    graph = sparse.coo_matrix(
        (np.ones(int(keep.sum()), dtype=np.int8), (rows[keep], cols[keep])), shape=(n, n)
    ).tocsr()
    return csgraph.connected_components(graph, directed=False)


def triangle_moments(a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> TriangleMoments:
    a, b, c = (np.asarray(p, dtype=np.float64) for p in (a, b, c))
    area = 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))
    g = (a + b + c) / 3.0
    d = np.stack([a - g, b - g, c - g])
    cov = area / 12.0 * (d.T @ d)
    return TriangleMoments(area, g, cov)


def face_moments(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`triangle_moments` for every face.

    Returns ``(areas (F,), centroids (F, 3), covs (F, 3, 3))``.
    """
    v = mesh.vertices[mesh.faces]
    areas = 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    g = v.mean(axis=1)
    d = v - g[:, None, :]
    covs = np.einsum("fki,fkj->fij", d, d) * (areas / 12.0)[:, None, None]
    return areas, g, np.ascontiguousarray(covs)


def normalized(mesh: TriangleMesh) -> tuple[TriangleMesh, np.ndarray, float]:
    """Copy of ``mesh`` centered at the origin with unit bbox diagonal.

    Returns ``(mesh, center, scale)`` so that ``original = scaled * scale + center``.
    """
    center = mesh.bbox_center
    scale = mesh.bbox_diagonal
    out = TriangleMesh((mesh.vertices - center) / scale, mesh.faces.copy(), mesh.colors)
    return out, center, scale


# --------------------------------------------------------------------------
# file I/O
# --------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _infer_format(path, format):
    if format is not None:
        return format.lower()
    ext = Path(path).suffix.lower().lstrip(".")
    if ext not in ("obj", "ply"):
        raise MeshError(f"cannot infer mesh format from {path!r}")
    return ext


def _triangulate_polygons(polys: list[list[int]]) -> np.ndarray:
    tris = []
    for p in polys:
        if len(p) < 3:
            raise MeshError(f"face with {len(p)} vertices")
        for k in range(1, len(p) - 1):
            tris.append((p[0], p[k], p[k + 1]))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    """Read an OBJ or PLY file; polygons are fan-triangulated."""
    fmt = _infer_format(path, format)
    try:
        if fmt == "obj":
            mesh = _read_obj(path)
        elif fmt == "ply":
            mesh = _read_ply(path)
        else:
            raise MeshError(f"unsupported format {fmt!r}")
    except (OSError, MeshError):
        raise
    except Exception as exc:  # malformed numeric fields and the like
        raise MeshError(f"failed to parse {path}: {exc}") from exc
    return mesh.validate()


def _read_obj(path) -> TriangleMesh:
    verts, polys = [], []
    with open(path, "r") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                polys.append(idx)
    return TriangleMesh(np.asarray(verts, dtype=np.float64), _triangulate_polygons(polys))


def _read_ply(path) -> TriangleMesh:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise MeshError("missing ply magic")
        fmt = None
        elements = []  # (name, count, [(prop, type) or (prop, ('list', ctype, itype))])
        while True:
            raw = fh.readline()
            if not raw:
                raise MeshError("truncated ply header")
            tok = raw.decode("ascii", "replace").split()
            if not tok or tok[0] in ("comment", "obj_info"):
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append((tok[1], int(tok[2]), []))
            elif tok[0] == "property":
                if tok[1] == "list":
                    elements[-1][2].append((tok[4], ("list", tok[2], tok[3])))
                else:
                    elements[-1][2].append((tok[2], tok[1]))
            elif tok[0] == "end_header":
                break
        if fmt == "ascii":
            data = _ply_ascii(fh, elements)
        elif fmt in ("binary_little_endian", "binary_big_endian"):
            data = _ply_binary(fh, elements, "<" if fmt == "binary_little_endian" else ">")
        else:
            raise MeshError(f"unknown ply format {fmt!r}")

    vdata = data.get("vertex")
    fdata = data.get("face")
    if vdata is None or fdata is None:
        raise MeshError("ply needs vertex and face elements")
    verts = np.column_stack([vdata["x"], vdata["y"], vdata["z"]]).astype(np.float64)
    key = "vertex_indices" if "vertex_indices" in fdata else "vertex_index"
    faces = _triangulate_polygons(fdata[key])
    colors = None
    if all(c in fdata for c in ("red", "green", "blue")):
        counts = [len(p) - 2 for p in fdata[key]]
        rgb = np.column_stack([fdata["red"], fdata["green"], fdata["blue"]]).astype(np.uint8)
        colors = np.repeat(rgb, counts, axis=0)
    return TriangleMesh(verts, faces, colors)


def _ply_ascii(fh, elements):
    data = {}
    tokens = iter(fh.read().decode("ascii").split())
    for name, count, props in elements:
        cols = {p: [] for p, _ in props}
        for _ in range(count):
            for p, t in props:
                if isinstance(t, tuple):
                    n = int(next(tokens))
                    cols[p].append([int(next(tokens)) for _ in range(n)])
                else:
                    cols[p].append(float(next(tokens)))
        data[name] = cols
    return data


def _ply_binary(fh, elements, endian):
    data = {}
    buf = fh.read()
    offset = 0
    for name, count, props in elements:
        if not any(isinstance(t, tuple) for _, t in props):
            dtype = np.dtype([(p, endian + _PLY_TYPES[t]) for p, t in props])
            arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
            offset += dtype.itemsize * count
            data[name] = {p: arr[p] for p, _ in props}
            continue
        cols = {p: [] for p, _ in props}
        for _ in range(count):
            for p, t in props:
                if isinstance(t, tuple):
                    ct = np.dtype(endian + _PLY_TYPES[t[1]])
                    it = np.dtype(endian + _PLY_TYPES[t[2]])
                    n = int(np.frombuffer(buf, ct, 1, offset)[0])
                    offset += ct.itemsize
                    cols[p].append(np.frombuffer(buf, it, n, offset).astype(np.int64).tolist())
                    offset += it.itemsize * n
                else:
                    dt = np.dtype(endian + _PLY_TYPES[t])
                    cols[p].append(np.frombuffer(buf, dt, 1, offset)[0])
                    offset += dt.itemsize
        data[name] = cols
    return data


def cluster_colors(labels: np.ndarray) -> np.ndarray:
    """Deterministic per-face RGB from cluster ids (integer hash)."""
    h = (np.asarray(labels, dtype=np.uint64) + np.uint64(1)) * np.uint64(2654435761)
    h ^= h >> np.uint64(13)
    h = (h * np.uint64(0x5BD1E995)) & np.uint64(0xFFFFFFFF)
    rgb = np.stack([(h >> np.uint64(s)) & np.uint64(0xFF) for s in (0, 8, 16)], axis=1)
    # keep colors away from black so boundaries stay visible
    return (64 + (rgb.astype(np.int64) * 191) // 255).astype(np.uint8)


def write_mesh(mesh, path, format: str | None = None, colors: np.ndarray | None = None,
               binary: bool = False) -> None:
    """Write a triangle mesh or a polygonal mesh to OBJ or PLY.

    ``mesh`` needs ``vertices`` and either ``faces`` or ``polygons`` (a list
    of index sequences). ``colors`` overrides per-face RGB (PLY only).
    """
    fmt = _infer_format(path, format)
    vertices = np.asarray(mesh.vertices, dtype=np.float64)
    polys = getattr(mesh, "polygons", None)
    if polys is None:
        polys = np.asarray(mesh.faces, dtype=np.int64)
    if colors is None:
        colors = getattr(mesh, "colors", None)
    directory = os.path.dirname(os.fspath(path))
    if directory and not os.path.isdir(directory):
        raise MeshError(f"directory does not exist: {directory}")
    if fmt == "obj":
        _write_obj(vertices, polys, path)
    elif fmt == "ply":
        _write_ply(vertices, polys, path, colors, binary)
    else:
        raise MeshError(f"unsupported format {fmt!r}")


def _write_obj(vertices, polys, path):
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in vertices.tolist()]
    lines += ["f " + " ".join(str(int(i) + 1) for i in p) + "\n" for p in polys]
    with open(path, "w") as fh:
        fh.writelines(lines)


def _write_ply(vertices, polys, path, colors, binary):
    has_color = colors is not None
    header = [
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"element vertex {len(vertices)}",
        "property double x", "property double y", "property double z",
        f"element face {len(polys)}",
        "property list uchar int vertex_indices",
    ]
    if has_color:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        if len(colors) != len(polys):
            raise MeshError("one color per face required")
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(np.asarray(vertices, dtype="<f8").tobytes())
            for k, p in enumerate(polys):
                fh.write(np.uint8(len(p)).tobytes())
                fh.write(np.asarray(p, dtype="<i4").tobytes())
                if has_color:
                    fh.write(colors[k].tobytes())
        else:
            out = [f"{x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in vertices.tolist()]
            for k, p in enumerate(polys):
                row = f"{len(p)} " + " ".join(str(int(i)) for i in p)
                if has_color:
                    r, g, b = colors[k].tolist()
                    row += f" {r} {g} {b}"
                out.append(row + "\n")
            fh.write("".join(out).encode("ascii"))

