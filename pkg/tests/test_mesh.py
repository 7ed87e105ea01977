import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fracshape.mesh import (
    CRACK_TAGS,
    MeshError,
    Tag,
    boundary_loops,
    boundary_topology,
    build_mesh,
    compute_boundary,
    fixed_nodes,
    min_scaled_jacobian,
    outward_normal,
    remesh,
    scaled_jacobians,
    update_coordinates,
)
from fracshape.specimen import SpecimenSpec, boundary_polygon


def shoelace(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def test_single_triangle_has_three_boundary_edges():
    edges, tags, elems = compute_boundary(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 1, 2]]))
    assert len(edges) == 3
    assert set(elems) == {0}


def test_square_tags(square):
    tags = {tuple(sorted(e)): Tag(t) for e, t in zip(square.edges.tolist(), square.tags)}
    assert tags == {(0, 1): Tag.BOTTOM, (1, 2): Tag.RIGHT, (2, 3): Tag.TOP, (0, 3): Tag.LEFT}


def test_nonmanifold_edge_rejected():
    with pytest.raises(MeshError):
        boundary_topology(np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]]))


def test_build_mesh_orients_clockwise_input():
    m = build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert m.signed_areas[0] == pytest.approx(0.5)


def test_arrays_are_read_only(square):
    with pytest.raises(ValueError):
        square.nodes[0, 0] = 3.0


def test_outward_normals_of_square(square):
    for e, tag in enumerate(square.tags):
        n, length = outward_normal(square, e)
        expect = {Tag.BOTTOM: (0, -1), Tag.TOP: (0, 1), Tag.LEFT: (-1, 0), Tag.RIGHT: (1, 0)}[Tag(tag)]
        np.testing.assert_allclose(n, expect, atol=1e-15)
        assert length == pytest.approx(1.0)


def test_edge_geometry_matches_outward_normal(medium_mesh):
    _, n, _ = medium_mesh.edge_geometry
    for e in range(0, len(medium_mesh.edges), 7):
        ref, _ = outward_normal(medium_mesh, e)
        np.testing.assert_allclose(n[e], ref, atol=1e-14)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-14)


def test_upper_slit_face_normal_points_down(medium_mesh):
    _, n, _ = medium_mesh.edge_geometry
    x = medium_mesh.nodes[medium_mesh.edges]
    upper = np.flatnonzero(
        (medium_mesh.tags == Tag.CRACK_FIXED) & np.all(np.abs(x[:, :, 1] - 0.51) < 1e-12, axis=1)
    )
    assert len(upper) > 0
    np.testing.assert_allclose(n[upper], np.tile([0.0, -1.0], (len(upper), 1)), atol=1e-14)


def test_zero_length_edge_is_an_error():
    m = build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    squashed = m.with_nodes(np.array([[0, 0], [0, 0], [0, 1.0]]))
    with pytest.raises(MeshError):
        outward_normal(squashed, 0)


def test_crack_fixed_predicate(medium_mesh):
    fixed = medium_mesh.edges[medium_mesh.edges_with(Tag.CRACK_FIXED)]
    x = medium_mesh.nodes[fixed]
    assert np.all(x[:, :, 0] >= 0.5 - 1e-9)
    assert np.all(np.abs(np.abs(x[:, :, 1] - 0.5) - 0.01) <= 1e-9)
    tip = medium_mesh.nodes[medium_mesh.edges[medium_mesh.edges_with(Tag.CRACK)]]
    assert np.all(tip[:, :, 0] <= 0.5 + 1e-9)


def test_scaled_jacobian_anchors():
    eq = build_mesh([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]], [[0, 1, 2]])
    assert min_scaled_jacobian(eq) == pytest.approx(1.0, abs=1e-14)
    right = build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    assert min_scaled_jacobian(right) == pytest.approx(2 / np.sqrt(3) * np.sqrt(0.5), abs=1e-12)
    assert min_scaled_jacobian(right) == pytest.approx(0.8165, abs=1e-4)
    flat = scaled_jacobians(np.array([[0, 0], [1, 0], [2, 0.0]]), np.array([[0, 1, 2]]))
    assert flat[0] == 0.0


def test_inverted_triangle_scores_negative():
    q = scaled_jacobians(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 2, 1]]))
    assert q[0] < 0


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, 2 * np.pi),
    st.floats(0.1, 10.0),
    st.lists(st.floats(-1, 1), min_size=6, max_size=6),
)
def test_quality_invariant_under_rotation_and_scaling(theta, scale, coords):
    p = np.array(coords).reshape(3, 2)
    tri = np.array([[0, 1, 2]])
    d = p[1:] - p[0]
    assume(abs(d[0, 0] * d[1, 1] - d[0, 1] * d[1, 0]) > 1e-3)
    q0 = scaled_jacobians(p, tri)
    c, s = np.cos(theta), np.sin(theta)
    q1 = scaled_jacobians(scale * p @ np.array([[c, -s], [s, c]]).T + 3.0, tri)
    np.testing.assert_allclose(q1, q0, atol=1e-9)


def test_update_coordinates_identity_and_pins(medium_mesh):
    V = np.zeros((medium_mesh.n_nodes, 2))
    assert update_coordinates(medium_mesh, V, 0.0) is medium_mesh
    with pytest.raises(ValueError):
        update_coordinates(medium_mesh, np.ones((medium_mesh.n_nodes, 2)), 1e-3)


def test_update_coordinates_linear_in_tau(medium_mesh):
    rng = np.random.default_rng(1)
    V = rng.normal(size=(medium_mesh.n_nodes, 2)) * 1e-3
    V[fixed_nodes(medium_mesh)] = 0.0
    two = update_coordinates(update_coordinates(medium_mesh, V, 0.3), V, 0.5)
    one = update_coordinates(medium_mesh, V, 0.8)
    np.testing.assert_allclose(two.nodes, one.nodes, atol=1e-15)
    np.testing.assert_array_equal(two.triangles, medium_mesh.triangles)


def test_update_coordinates_flags_inversion(medium_mesh):
    free = np.setdiff1d(np.arange(medium_mesh.n_nodes), fixed_nodes(medium_mesh))
    V = np.zeros((medium_mesh.n_nodes, 2))
    V[free[0]] = [10.0, 10.0]
    assert update_coordinates(medium_mesh, V, 1.0).has_inverted


def test_area_matches_shoelace(medium_mesh):
    spec = SpecimenSpec("round", 1e-2, "medium")
    assert medium_mesh.area == pytest.approx(shoelace(boundary_polygon(spec)), rel=1e-10)


def test_boundary_is_a_single_loop(medium_mesh):
    loops = boundary_loops(medium_mesh)
    assert len(loops) == 1 and len(loops[0]) == len(medium_mesh.edges)
    medium_mesh.validate()


def test_remesh_preserves_region_and_crack(medium_mesh):
    out = remesh(medium_mesh, 0.045)
    out.validate()
    assert out.area == pytest.approx(medium_mesh.area, rel=1e-10)
    assert min_scaled_jacobian(out) >= 0.30
    crack = lambda m: {tuple(np.round(p, 12)) for p in m.nodes[m.nodes_with(*CRACK_TAGS)]}
    assert crack(medium_mesh) <= crack(out)
    assert sorted(set(out.tags)) == sorted(set(medium_mesh.tags))


def test_remesh_repairs_squashed_mesh(medium_mesh):
    # push one interior node almost onto the opposite edge of a neighbouring triangle
    x = medium_mesh.nodes
    free = np.setdiff1d(np.arange(medium_mesh.n_nodes), fixed_nodes(medium_mesh))
    node = free[np.argmin(np.hypot(x[free, 0] - 0.3, x[free, 1] - 0.3))]
    tri = medium_mesh.triangles[np.flatnonzero((medium_mesh.triangles == node).any(axis=1))[0]]
    target = x[tri[tri != node]].mean(axis=0)
    V = np.zeros_like(x)
    V[node] = target - x[node]
    bad = update_coordinates(medium_mesh, V, 0.95)
    assert not bad.has_inverted
    assert min_scaled_jacobian(bad) < 0.1
    good = remesh(bad, 0.045)
    assert min_scaled_jacobian(good) >= 0.30
    assert good.area == pytest.approx(bad.area, rel=1e-10)


def test_unit_square_remesh_count(square):
    out = remesh(square, 0.045)
    assert abs(out.n_triangles - 1333) <= 0.15 * 1333
    assert out.area == pytest.approx(1.0, rel=1e-12)
    assert {Tag(t) for t in out.tags} == {Tag.BOTTOM, Tag.TOP, Tag.LEFT, Tag.RIGHT}


def test_remesh_merges_bunched_crack_vertices(medium_mesh):
    x = medium_mesh.nodes
    crack = medium_mesh.nodes_with(Tag.CRACK)
    apex = crack[np.argmin(x[crack, 0])]
    others = crack[crack != apex]
    near = others[np.argmin(np.hypot(*(x[others] - x[apex]).T))]
    V = np.zeros_like(x)
    V[near] = 0.9 * (x[apex] - x[near])
    bunched = update_coordinates(medium_mesh, V, 1.0)
    assert not bunched.has_inverted
    out = remesh(bunched, 0.045)
    out.validate()
    kept = {tuple(np.round(p, 12)) for p in out.nodes[out.nodes_with(*CRACK_TAGS)]}
    assert tuple(np.round(x[apex], 12)) in kept
    assert tuple(np.round(bunched.nodes[near], 12)) not in kept
    fixed = {tuple(np.round(p, 12)) for p in x[medium_mesh.nodes_with(Tag.CRACK_FIXED)]}
    assert fixed <= kept
    assert out.area == pytest.approx(bunched.area, rel=1e-4)
