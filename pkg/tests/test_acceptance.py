"""Acceptance criteria 1-9.

Each test records a one-line verdict that is printed in the terminal
summary, then asserts on it.  The two benchmark runs take tens of minutes.
"""

import time

import numpy as np
import pytest
from conftest import structured_square

from fracshape import fem
from fracshape.driver import LoadSchedule, run_simulation
from fracshape.elasticity import Discretization, Material
from fracshape.specimen import SpecimenSpec
from fracshape.verify import (
    check_adjoint,
    check_deformation,
    check_irreversibility,
    check_shape,
    check_shear,
    check_spectral,
    check_tension,
    check_tip_fields,
    run_benchmark,
)


def _summary(rep):
    failed = [r for r in rep.rows if not r.ok]
    upper = [r for r in rep.rows if not r.at_least and not r.name.startswith("runtime")]
    # size limits (node and dof counts) are less telling than the error bounds
    errors = [r for r in upper if 0 < r.tol < 1] or upper
    shown = failed or sorted(errors, key=lambda r: r.value / r.tol if r.tol else r.value)[-1:]
    parts = [f"{r.name} = {r.value:.3g} (tol {r.tol:g}){' ' + r.note if r.note else ''}" for r in shown]
    return f"[{rep.check}, {rep.seconds:.1f} s] " + ("FAILED " if failed else "worst: ") + "; ".join(parts)


def _record(log, n, rep):
    print(rep.format())
    log[n] = (rep.passed, _summary(rep))
    assert rep.passed, rep.format()


@pytest.fixture(scope="module")
def tension():
    t0 = time.perf_counter()
    res = run_benchmark("tension")
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def shear():
    t0 = time.perf_counter()
    res = run_benchmark("shear")
    return res, time.perf_counter() - t0


def test_criterion_1_spectral_suite(acceptance_log):
    _record(acceptance_log, 1, check_spectral(seed=0, n=10_000))


def test_criterion_2_tip_fields(acceptance_log, medium_mesh):
    _record(acceptance_log, 2, check_tip_fields(medium_mesh, load_um=5.0))


def test_criterion_3_adjoint_fd(acceptance_log):
    _record(acceptance_log, 3, check_adjoint(seed=0, n_dirs=20))


def test_criterion_4_shape_derivative_fd(acceptance_log, medium_mesh):
    _record(acceptance_log, 4, check_shape(seed=0, mesh=medium_mesh))


def test_criterion_5_deformation(acceptance_log, medium_mesh):
    _record(acceptance_log, 5, check_deformation(seed=0, mesh=medium_mesh))


def test_criterion_6_tension_benchmark(acceptance_log, tension):
    res, seconds = tension
    assert res.error is None, res.error
    _record(acceptance_log, 6, check_tension(res, seconds))


def test_criterion_7_shear_benchmark(acceptance_log, shear):
    res, seconds = shear
    assert res.error is None, res.error
    _record(acceptance_log, 7, check_shear(res, seconds))


def test_criterion_8_irreversibility(acceptance_log, tension, shear):
    _record(acceptance_log, 8, check_irreversibility(tension[0], shear[0]))


def test_criterion_9_patch_and_determinism(acceptance_log, tmp_path):
    m = structured_square(6)
    rng = np.random.default_rng(9)
    interior = np.flatnonzero(np.all((m.nodes > 1e-9) & (m.nodes < 1 - 1e-9), axis=1))
    nodes = m.nodes.copy()
    nodes[interior] += rng.uniform(-0.04, 0.04, (len(interior), 2))
    m = m.with_nodes(nodes)
    exact = np.column_stack([1e-3 + 2e-3 * nodes[:, 0] - 1e-3 * nodes[:, 1], -4e-4 + 5e-4 * nodes[:, 0] + 3e-3 * nodes[:, 1]])
    boundary = np.setdiff1d(np.arange(m.n_nodes), interior)
    dofs = fem.node_dofs(boundary)
    disc = Discretization(m, Material())
    u = fem.solve(fem.apply_dirichlet(disc.stiffness, np.zeros(2 * m.n_nodes), dofs, exact.ravel()[dofs]))
    patch = float(np.abs(u.reshape(-1, 2) - exact).max() / np.abs(exact).max())

    sched = LoadSchedule(coarse_increment=1.0, switch_at=3.0, max_loadsteps=3)
    csv = []
    for k in range(2):
        run_simulation(SpecimenSpec("round", 1e-2, "coarse"), schedule=sched, out_dir=tmp_path / f"run{k}")
        csv.append((tmp_path / f"run{k}" / "records.csv").read_bytes())
    same = csv[0] == csv[1]
    ok = patch <= 1e-12 and same
    acceptance_log[9] = (ok, f"patch error {patch:.2e} (tol 1e-12); CSV byte-identical: {same}")
    assert patch <= 1e-12
    assert same
