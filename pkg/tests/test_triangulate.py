import numpy as np
import pytest

from fracshape.mesh import build_mesh, min_scaled_jacobian
from fracshape.triangulate import GeometryError, triangulate


def test_square_is_conforming_and_graded():
    loop = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
    nodes, tris = triangulate([loop], 0.1)
    m = build_mesh(nodes, tris)
    m.validate()
    assert m.area == pytest.approx(1.0, rel=1e-12)
    assert min_scaled_jacobian(m) > 0.45
    lengths = np.linalg.norm(m.nodes[m.edges[:, 1]] - m.nodes[m.edges[:, 0]], axis=1)
    assert lengths.max() <= 0.1 + 1e-12


def test_input_vertices_are_kept():
    loop = np.array([[0, 0], [1, 0], [1, 0.45], [0.6, 0.5], [1, 0.55], [1, 1], [0, 1.0]])
    nodes, _ = triangulate([loop], 0.15)
    for p in loop:
        assert np.min(np.linalg.norm(nodes - p, axis=1)) == 0.0


def test_notch_is_not_filled():
    loop = np.array([[0, 0], [1, 0], [1, 0.49], [0.5, 0.49], [0.5, 0.51], [1, 0.51], [1, 1], [0, 1.0]])
    nodes, tris = triangulate([loop], 0.1)
    m = build_mesh(nodes, tris)
    assert m.area == pytest.approx(1 - 0.5 * 0.02, rel=1e-12)
    c = m.nodes[m.triangles].mean(axis=1)
    assert not np.any((c[:, 0] > 0.5) & (np.abs(c[:, 1] - 0.5) < 0.01))


def test_self_intersecting_loop_rejected():
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1.0]])
    with pytest.raises(GeometryError):
        triangulate([bowtie], 0.1)


def test_clockwise_input_is_accepted():
    loop = np.array([[0, 0], [0, 1], [1, 1], [1, 0.0]])
    nodes, tris = triangulate([loop], 0.2)
    assert build_mesh(nodes, tris).area == pytest.approx(1.0)


def test_deterministic():
    loop = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
    a = triangulate([loop], 0.07)
    b = triangulate([loop], 0.07)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
