import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import mc_triangle_moments, rotation, sympy_triangle_moments
from pcaremesh.mesh_core import (MeshError, TriangleMesh, build_adjacency, cluster_colors,
                                 face_moments, load_mesh, normalized, triangle_moments,
                                 write_mesh)
from pcaremesh.moments import ClusterMoments, merge

UNIT = ([0, 0, 0], [1, 0, 0], [0, 1, 0])

TETRA = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]]),
                     np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]))

def _edge_scale(a, b, c):
    # round-off in moments scales with the longest edge, not with the (possibly tiny) area
    pts = np.array([a, b, c], dtype=float)
    return max(np.linalg.norm(pts - np.roll(pts, 1, axis=0), axis=1).max(), 1e-300)


coord = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord)


def test_unit_triangle_closed_form():
    tm = triangle_moments(*UNIT)
    assert tm.area == pytest.approx(0.5)
    np.testing.assert_allclose(tm.centroid, [1 / 3, 1 / 3, 0])
    expected = np.array([[1 / 36, -1 / 72, 0], [-1 / 72, 1 / 36, 0], [0, 0, 0]])
    np.testing.assert_allclose(tm.cov, expected, atol=1e-17)


def test_unit_triangle_symbolic_oracle():
    area, cen, cov = sympy_triangle_moments(*UNIT)
    tm = triangle_moments(*UNIT)
    assert tm.area == pytest.approx(area, rel=1e-15)
    np.testing.assert_allclose(tm.centroid, cen, rtol=1e-15)
    np.testing.assert_allclose(tm.cov, cov, atol=1e-17)


def test_tilted_triangle_symbolic_oracle():
    tri = ([1, 2, 0], [3, -1, 2], [0, 1, 4])
    area, cen, cov = sympy_triangle_moments(*tri)
    tm = triangle_moments(*tri)
    assert tm.area == pytest.approx(area, rel=1e-13)
    np.testing.assert_allclose(tm.cov, cov, rtol=1e-12, atol=1e-12 * np.abs(cov).max())


def test_unit_triangle_monte_carlo():
    n = 1_000_000
    area, cen, cov = mc_triangle_moments(*UNIT, n=n)
    tm = triangle_moments(*UNIT)
    # entry-wise standard error of area * mean(d_i d_j) is about area * sqrt(2 / n) * cov scale
    se = area * np.sqrt(2.0 / n) * (1 / 18)
    np.testing.assert_allclose(tm.cov, cov, atol=4 * se)
    np.testing.assert_allclose(tm.centroid, cen, atol=1e-3)


def test_random_triangles_within_three_standard_errors():
    rng = np.random.default_rng(3)
    n = 200_000
    iu = np.triu_indices(3)
    z_all = []
    for k in range(100):
        a, b, c = rng.normal(size=(3, 3))
        tm = triangle_moments(a, b, c)
        r1, r2 = rng.random(n), rng.random(n)
        s = np.sqrt(r1)
        pts = (1 - s)[:, None] * a + (s * (1 - r2))[:, None] * b + (s * r2)[:, None] * c
        d = pts - pts.mean(axis=0)
        prod = d[:, iu[0]] * d[:, iu[1]] * tm.area
        se = prod.std(axis=0, ddof=1) / np.sqrt(n)
        z_all.append((prod.mean(axis=0) - tm.cov[iu]) / se)
    z = np.abs(np.concatenate(z_all))
    # 600 entries: about 0.3% exceed 3 standard errors by chance
    assert np.mean(z > 3) <= 0.02
    assert z.max() < 5


def test_collinear_triangle_has_zero_moments():
    tm = triangle_moments([0, 0, 0], [1, 1, 1], [2, 2, 2])
    assert tm.area == 0
    np.testing.assert_array_equal(tm.cov, np.zeros((3, 3)))


@settings(max_examples=200, deadline=None)
@given(point, point, point, point)
def test_translation_invariance(a, b, c, t):
    tm = triangle_moments(a, b, c)
    moved = triangle_moments(*(np.add(p, t) for p in (a, b, c)))
    np.testing.assert_allclose(moved.centroid, tm.centroid + np.asarray(t), atol=1e-9)
    np.testing.assert_allclose(moved.cov, tm.cov, atol=1e-9 * max(1.0, np.abs(tm.cov).max()))


@settings(max_examples=200, deadline=None)
@given(point, point, point, st.integers(0, 2 ** 31))
def test_rotation_equivariance(a, b, c, seed):
    R = rotation(np.random.default_rng(seed))
    tm = triangle_moments(a, b, c)
    rot = triangle_moments(*(R @ np.asarray(p) for p in (a, b, c)))
    scale = _edge_scale(a, b, c) ** 4
    np.testing.assert_allclose(rot.cov, R @ tm.cov @ R.T, atol=1e-12 * scale)
    assert np.trace(rot.cov) == pytest.approx(np.trace(tm.cov), rel=1e-12, abs=1e-12 * scale)


@settings(max_examples=200, deadline=None)
@given(point, point, point)
def test_triangle_cov_is_rank_two_psd(a, b, c):
    tm = triangle_moments(a, b, c)
    w = np.linalg.eigvalsh(tm.cov)
    tr = np.trace(tm.cov)
    assert w[0] >= -1e-12 * tr - 1e-300
    assert abs(w[0]) <= 1e-12 * tr + 1e-300
    if tm.area > 1e-6:
        assert tr > 0


@settings(max_examples=200, deadline=None)
@given(point, point, point, st.integers(0, 2))
def test_midpoint_split_additivity(a, b, c, edge):
    pts = [np.asarray(p, dtype=float) for p in (a, b, c)]
    p, q, r = pts[edge], pts[(edge + 1) % 3], pts[(edge + 2) % 3]
    m = 0.5 * (p + q)
    parent = ClusterMoments.from_triangle(p, q, r)
    halves = merge(ClusterMoments.from_triangle(p, m, r), ClusterMoments.from_triangle(m, q, r))
    L = _edge_scale(a, b, c)
    assert halves.area == pytest.approx(parent.area, rel=1e-12, abs=1e-12 * L ** 2)
    np.testing.assert_allclose(halves.cov, parent.cov, atol=1e-12 * L ** 4)


def test_face_moments_matches_scalar_version():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(30, 3))
    F = rng.integers(0, 30, size=(40, 3))
    F = F[(F[:, 0] != F[:, 1]) & (F[:, 1] != F[:, 2]) & (F[:, 0] != F[:, 2])]
    areas, cens, covs = face_moments(TriangleMesh(V, F))
    for k, f in enumerate(F):
        tm = triangle_moments(*V[f])
        assert areas[k] == pytest.approx(tm.area)
        np.testing.assert_allclose(covs[k], tm.cov, atol=1e-15)


# -- adjacency -----------------------------------------------------------------

def test_tetrahedron_every_face_has_three_neighbors():
    adj = build_adjacency(TETRA)
    assert (adj.neighbors >= 0).all()
    assert adj.n_edges == 6


def test_single_triangle_has_three_boundary_edges():
    adj = build_adjacency(TriangleMesh(np.array(UNIT, dtype=float), [[0, 1, 2]]))
    assert (adj.neighbors == -1).all()
    assert adj.boundary.sum() == 3


def test_two_triangles_share_one_edge():
    m = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0.0]]), [[0, 1, 2], [0, 2, 3]])
    adj = build_adjacency(m)
    assert adj.degree().tolist() == [1, 1]


def test_adjacency_is_symmetric_through_same_edge():
    from pcaremesh.shapes import AnalyticSurface
    m = AnalyticSurface("sphere").tessellate(2)
    adj = build_adjacency(m)
    for f in range(m.n_faces):
        for k in range(3):
            g = adj.neighbors[f, k]
            e = {m.faces[f, k], m.faces[f, (k + 1) % 3]}
            back = [j for j in range(3) if adj.neighbors[g, j] == f]
            assert len(back) == 1
            assert {m.faces[g, back[0]], m.faces[g, (back[0] + 1) % 3]} == e
            assert adj.edge_ids[f, k] == adj.edge_ids[g, back[0]]


def test_non_manifold_edge_rejected_with_edge_id():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1.0]])
    F = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
    with pytest.raises(MeshError, match="edge"):
        TriangleMesh(V, F).validate()


@pytest.mark.parametrize("V,F,msg", [
    (np.zeros((0, 3)), np.zeros((0, 3)), "empty"),
    (np.eye(3), [[0, 1, 5]], "range"),
    (np.eye(3), [[0, 1, 1]], "repeated"),
    (np.zeros((3, 3)), [[0, 1, 2]], "bounding box"),
])
def test_validation_errors(V, F, msg):
    with pytest.raises(MeshError, match=msg):
        TriangleMesh(V, F).validate()


def test_normalized_has_unit_diagonal_and_round_trips():
    m = TETRA.copy()
    m.vertices = m.vertices * 7 + [3, -2, 100]
    n, center, scale = normalized(m)
    assert n.bbox_diagonal == pytest.approx(1.0)
    np.testing.assert_allclose(n.bbox_center, 0, atol=1e-15)
    np.testing.assert_allclose(n.vertices * scale + center, m.vertices)


# -- file I/O ------------------------------------------------------------------

def test_single_triangle_obj(tmp_path):
    p = tmp_path / "t.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (3, 1)


def test_quad_obj_is_fan_split(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 -1/4/4\n")
    m = load_mesh(p)
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]


@pytest.mark.parametrize("ext,binary", [("obj", False), ("ply", False), ("ply", True)])
def test_write_read_round_trip(tmp_path, ext, binary):
    rng = np.random.default_rng(1)
    m = TETRA.copy()
    m.vertices = m.vertices + rng.normal(scale=1e-3, size=m.vertices.shape)
    path = tmp_path / f"m.{ext}"
    write_mesh(m, path, binary=binary)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=1e-9)


def test_ply_colors_follow_cluster_hash(tmp_path):
    labels = np.array([0, 1, 1, 2])
    colors = cluster_colors(labels)
    assert (colors[1] == colors[2]).all() and not (colors[0] == colors[1]).all()
    path = tmp_path / "c.ply"
    write_mesh(TETRA, path, colors=colors)
    np.testing.assert_array_equal(load_mesh(path).colors, colors)
    assert "property uchar red" in path.read_text()


def test_polygon_obj_keeps_pentagon(tmp_path):
    class Poly:
        vertices = np.array([[np.cos(t), np.sin(t), 0] for t in np.linspace(0, 2 * np.pi, 6)[:-1]])
        polygons = [[0, 1, 2, 3, 4]]
    path = tmp_path / "p.obj"
    write_mesh(Poly, path)
    assert path.read_text().splitlines()[-1] == "f 1 2 3 4 5"


def test_binary_big_endian_ply(tmp_path):
    V = np.array(UNIT, dtype=">f4")
    header = ("ply\nformat binary_big_endian 1.0\nelement vertex 3\nproperty float x\n"
              "property float y\nproperty float z\nelement face 1\n"
              "property list uchar int vertex_indices\nend_header\n").encode()
    body = V.tobytes() + np.array([3], dtype="u1").tobytes() + np.array([0, 1, 2], dtype=">i4").tobytes()
    path = tmp_path / "be.ply"
    path.write_bytes(header + body)
    m = load_mesh(path)
    np.testing.assert_array_equal(m.vertices, np.array(UNIT, dtype=float))


def test_write_to_missing_directory_fails(tmp_path):
    with pytest.raises(MeshError):
        write_mesh(TETRA, tmp_path / "nope" / "m.obj")


def test_unparseable_file(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 zero\n")
    with pytest.raises(MeshError):
        load_mesh(p)
