import numpy as np
import pytest
from scipy.sparse.linalg import spsolve

from fracshape import fem
from fracshape.adjoint import solve_adjoint
from fracshape.deformation import (
    DeformationError,
    PenaltyConfig,
    _Penalty,
    metric_form,
    metric_matrix,
    newton_jacobian,
    penalty_energy_density,
    penalty_violation,
    solve_deformation,
)
from fracshape.elasticity import (
    BoundaryCondition,
    Discretization,
    Material,
    solve_state,
)
from fracshape.mesh import fixed_nodes
from fracshape.shapederiv import shape_derivative_vector
from fracshape.verify import check_deformation


@pytest.fixture(scope="module")
def gradient(medium_mesh):
    mat = Material()
    disc = Discretization(medium_mesh, mat)
    w = solve_state(medium_mesh, mat, BoundaryCondition((0.0, 5e-3)), disc)
    z = solve_adjoint(medium_mesh, mat, w, disc)
    return shape_derivative_vector(medium_mesh, mat, w, z, disc)


def test_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(psi_schedule=(1e12, 1e10))
    with pytest.raises(ValueError):
        PenaltyConfig(psi_schedule=())
    with pytest.raises(ValueError):
        PenaltyConfig(epsilon_gap=-1.0)
    assert PenaltyConfig().psi_final == 1e15


def test_metric_is_symmetric_positive(small_mesh):
    M = metric_matrix(Discretization(small_mesh, Material())).toarray()
    np.testing.assert_allclose(M, M.T, atol=1e-12)
    assert np.linalg.eigvalsh(M).min() > 0
    V = np.ones((small_mesh.n_nodes, 2))
    # constant fields only see the mass part: a(V, V) = 2 * area
    assert metric_form(small_mesh, Material(), V, V) == pytest.approx(2 * small_mesh.area, rel=1e-12)


def test_zero_gradient_gives_zero_field(medium_mesh):
    V = solve_deformation(medium_mesh, Material(), np.zeros((medium_mesh.n_nodes, 2)), PenaltyConfig(epsilon_gap=0.0))
    assert np.all(V == 0)


def test_without_penalty_is_a_linear_solve(medium_mesh, gradient):
    mat = Material()
    V = solve_deformation(medium_mesh, mat, gradient, PenaltyConfig(psi_schedule=(0.0,)))
    disc = Discretization(medium_mesh, mat)
    free = np.setdiff1d(np.arange(2 * medium_mesh.n_nodes), fem.node_dofs(fixed_nodes(medium_mesh)))
    M = metric_matrix(disc)[free][:, free].tocsc()
    ref = -spsolve(M, gradient.ravel()[free])
    np.testing.assert_allclose(V.ravel()[free], ref, rtol=1e-8, atol=1e-12 * np.abs(ref).max())


def test_jacobian_equals_metric_when_inactive(small_mesh):
    rng = np.random.default_rng(0)
    mat = Material()
    V = np.zeros((small_mesh.n_nodes, 2))
    W, Wt = rng.normal(size=(2, small_mesh.n_nodes, 2))
    assert newton_jacobian(small_mesh, mat, V, Wt, W, eps=0.0) == pytest.approx(metric_form(small_mesh, mat, Wt, W), rel=1e-13)
    sym = newton_jacobian(small_mesh, mat, V, W, Wt)
    assert newton_jacobian(small_mesh, mat, V, Wt, W) == pytest.approx(sym, rel=1e-12)


def test_penalty_jacobian_matches_fd(small_mesh):
    pen = _Penalty(small_mesh, 1e-3)
    rng = np.random.default_rng(1)
    V = rng.normal(size=(small_mesh.n_nodes, 2)) * 1e-3
    D = rng.normal(size=V.shape)
    h = 1e-9
    fd = (pen.residual(V + h * D, 1.0) - pen.residual(V - h * D, 1.0)).ravel() / (2 * h)
    exact = pen.jacobian(V, 1.0) @ D.ravel()
    np.testing.assert_allclose(fd, exact, rtol=1e-5, atol=1e-9 * np.abs(exact).max())


def test_penalty_terms_vanish_for_opening_fields(medium_mesh):
    # everything pushed along the outward crack normal opens the faces
    pen = _Penalty(medium_mesh, 1e-7)
    V = np.zeros((medium_mesh.n_nodes, 2))
    np.add.at(V, pen.ab, -1e-3 * pen.n[:, None, :])
    assert penalty_violation(medium_mesh, V) == 0
    assert np.all(penalty_energy_density(medium_mesh, V, 1e15) == 0)
    assert penalty_violation(medium_mesh, np.zeros_like(V)) == pytest.approx(1e-7 * pen.length.sum())


def test_solution_properties(medium_mesh, gradient):
    cfg = PenaltyConfig()
    V, info = solve_deformation(medium_mesh, Material(), gradient, cfg, full_output=True)
    assert info.residual <= info.tolerance
    assert info.psi == 1e15
    assert np.all(V[fixed_nodes(medium_mesh)] == 0)
    assert float(np.sum(gradient * V)) < 0
    assert penalty_violation(medium_mesh, V) <= 1e-6


def test_warm_start_converges_at_once(medium_mesh, gradient):
    cfg = PenaltyConfig()
    V = solve_deformation(medium_mesh, Material(), gradient, cfg)
    V2, info = solve_deformation(medium_mesh, Material(), gradient, cfg, V0=V, full_output=True)
    assert info.newton_iterations <= 1
    np.testing.assert_allclose(V2, V, atol=1e-12 * np.abs(V).max())


def test_newton_converges_fast(medium_mesh, gradient):
    _, info = solve_deformation(medium_mesh, Material(), gradient, PenaltyConfig(), full_output=True)
    assert info.newton_iterations <= 6 * 15


def test_unconverged_newton_raises(medium_mesh, gradient):
    cfg = PenaltyConfig(newton_max_iter=1, newton_tol=1e-30)
    with pytest.raises(DeformationError):
        solve_deformation(medium_mesh, Material(), gradient, cfg)


def test_report_passes(medium_mesh):
    rep = check_deformation(mesh=medium_mesh)
    assert rep.passed, rep.format()
