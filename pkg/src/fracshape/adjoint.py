"""Adjoint state for the split bulk energy.

Under P1 every integrand is element-constant, so one-point quadrature is
exact.  The adjoint system reuses the state factorization.
"""

from __future__ import annotations

import numpy as np

from . import fem
from .elasticity import Discretization, Material, split_stress
from .mesh import TriMesh


def adjoint_rhs(mesh: TriMesh, material: Material, w: np.ndarray, disc: Discretization | None = None) -> np.ndarray:
    """Nodal vector ``F`` with ``F . w~`` the variation of E_bulk along ``w~``."""
    disc = disc or Discretization(mesh, material)
    S = split_stress(material, disc.strain(w))
    return fem.assemble_gradient_pairing(mesh, disc.G, disc.area, S)


def solve_adjoint(mesh: TriMesh, material: Material, w: np.ndarray, disc: Discretization | None = None) -> np.ndarray:
    """Solve ``K z = -F`` with homogeneous Dirichlet data on Bottom and Top."""
    disc = disc or Discretization(mesh, material)
    rhs = -adjoint_rhs(mesh, material, w, disc).ravel()
    rhs[disc.dirichlet_dofs] = 0.0
    return disc.factorization.solve(rhs).reshape(-1, 2)
