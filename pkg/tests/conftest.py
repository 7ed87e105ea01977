import logging
from pathlib import Path

import numpy as np
import pytest

from fracshape.mesh import build_mesh
from fracshape.specimen import SpecimenSpec, generate
from fracshape.verify import small_specimen

DATA = Path(__file__).parent / "data"


@pytest.fixture(autouse=True)
def _quiet_specimen_warning(caplog):
    # the default medium round tip is deliberately below the target_h/4 resolution hint
    caplog.set_level(logging.ERROR, logger="fracshape.specimen")


@pytest.fixture(scope="session")
def medium_mesh():
    return generate(SpecimenSpec("round", 1e-2, "medium"))


@pytest.fixture(scope="session")
def small_mesh():
    return small_specimen()


@pytest.fixture
def square():
    return build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])


def structured_square(n):
    """Unit square split into 2 n^2 right triangles."""
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            tris += [[a, b, c], [a, c, d]]
    return build_mesh(nodes, tris)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    return pytestconfig.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(ACCEPTANCE_KEY, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        ok, detail = log[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
