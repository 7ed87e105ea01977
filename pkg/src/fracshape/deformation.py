"""Sobolev shape gradient with a penalty for crack irreversibility.

The gradient ``V`` solves

    a(V, W) + dL[W] + psi * int_u max(0, V.n + eps)^2 W.n ds = 0

for all admissible ``W``, where ``a(V, W) = int V.W + A grad V : grad W``.
The sign in front of ``dL`` makes ``V`` a descent direction.  ``V`` is
pinned to zero on the outer boundary and on CrackFixed nodes by
eliminating those rows.  The penalty integral uses two-point Gauss
quadrature per crack edge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import fem
from .elasticity import Discretization, Material
from .mesh import CRACK_TAGS, TriMesh, fixed_nodes

log = logging.getLogger(__name__)

_GAUSS_S = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])


class DeformationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    psi_schedule: tuple[float, ...] = (1e10, 1e11, 1e12, 1e13, 1e14, 1e15)
    epsilon_gap: float = 1e-7
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    armijo_c: float = 1e-4
    descent_sign: int = -1

    def __post_init__(self):
        psi = np.asarray(self.psi_schedule, dtype=float)
        if len(psi) == 0 or np.any(psi < 0) or np.any(np.diff(psi) <= 0):
            raise ValueError("psi_schedule must be non-negative and increasing")
        if self.epsilon_gap < 0:
            raise ValueError("epsilon_gap must be >= 0")
        if self.descent_sign not in (-1, 1):
            raise ValueError("descent_sign must be +1 or -1")

    @property
    def psi_final(self) -> float:
        return float(self.psi_schedule[-1])


@dataclass
class DeformationInfo:
    residual: float
    tolerance: float
    newton_iterations: int
    psi: float


def metric_matrix(disc: Discretization) -> sp.csr_matrix:
    """Matrix of ``a(V, W)`` on interleaved dofs (no boundary conditions)."""
    cached = disc.__dict__.get("_metric_matrix")
    if cached is None:
        A = disc.material.a_metric
        local = fem.mass_local(disc.area) + A * fem.laplace_local(disc.G, disc.area)
        cached = fem.assemble_matrix(disc.mesh.triangles, fem.scalar_to_vector(local), 2 * disc.mesh.n_nodes)
        disc.__dict__["_metric_matrix"] = cached
    return cached


def metric_form(mesh: TriMesh, material: Material, V: np.ndarray, W: np.ndarray) -> float:
    M = metric_matrix(Discretization(mesh, material))
    return float(np.ravel(V) @ (M @ np.ravel(W)))


class _Penalty:
    """Crack-edge penalty terms for a fixed mesh."""

    def __init__(self, mesh: TriMesh, eps: float):
        edges = mesh.edges_with(*CRACK_TAGS)
        _, n, length = mesh.edge_geometry
        self.ab = mesh.edges[edges]
        self.n = n[edges]
        self.length = length[edges]
        self.eps = eps
        self.n_nodes = mesh.n_nodes
        # phi[q, k]: basis value of endpoint k at quadrature point q
        self.phi = np.stack([1.0 - _GAUSS_S, _GAUSS_S], axis=1)

    def gap(self, V: np.ndarray) -> np.ndarray:
        """``V.n + eps`` at quadrature points, shape (edges, 2)."""
        vn = np.einsum("ekj,ej->ek", V[self.ab], self.n)
        return vn @ self.phi.T + self.eps

    def residual(self, V: np.ndarray, psi: float) -> np.ndarray:
        g = np.maximum(self.gap(V), 0.0)
        coef = psi * self.length[:, None] * _GAUSS_W * g * g
        nodal = coef @ self.phi
        out = np.zeros((self.n_nodes, 2))
        np.add.at(out, self.ab, nodal[:, :, None] * self.n[:, None, :])
        return out

    def jacobian(self, V: np.ndarray, psi: float) -> sp.csr_matrix:
        g = np.maximum(self.gap(V), 0.0)
        coef = 2.0 * psi * self.length[:, None] * _GAUSS_W * g
        kk = np.einsum("eq,qa,qb->eab", coef, self.phi, self.phi)
        nn = np.einsum("ei,ej->eij", self.n, self.n)
        blocks = np.einsum("eab,eij->eaibj", kk, nn).reshape(-1, 16)
        dofs = np.stack([2 * self.ab, 2 * self.ab + 1], axis=2).reshape(-1, 4)
        rows = np.repeat(dofs, 4, axis=1).ravel()
        cols = np.tile(dofs, (1, 4)).ravel()
        n = 2 * self.n_nodes
        return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    def violation(self, V: np.ndarray) -> float:
        g = np.maximum(self.gap(V), 0.0)
        return float(np.sum(self.length[:, None] * _GAUSS_W * g))

    def energy_density(self, V: np.ndarray, psi: float) -> np.ndarray:
        g = np.maximum(self.gap(V), 0.0)
        return psi * g**3 / 3.0


def newton_jacobian(
    mesh: TriMesh, material: Material, V: np.ndarray, W_tilde: np.ndarray, W: np.ndarray,
    psi: float = 1e15, eps: float = 1e-7,
) -> float:
    """``a(W~, W) + 2 psi int_u max(0, V.n + eps) (W.n)(W~.n) ds``."""
    disc = Discretization(mesh, material)
    Vn = np.asarray(V, dtype=float).reshape(-1, 2)
    J = metric_matrix(disc) + _Penalty(mesh, eps).jacobian(Vn, psi)
    return float(np.ravel(W_tilde) @ (J @ np.ravel(W)))


def penalty_violation(mesh: TriMesh, V: np.ndarray, eps: float = 1e-7) -> float:
    """``int_u max(0, V.n + eps) ds``."""
    return _Penalty(mesh, eps).violation(np.asarray(V, dtype=float).reshape(-1, 2))


def penalty_energy_density(mesh: TriMesh, V: np.ndarray, psi: float, eps: float = 1e-7) -> np.ndarray:
    """``psi/3 max(0, V.n + eps)^3`` at every crack quadrature point."""
    return _Penalty(mesh, eps).energy_density(np.asarray(V, dtype=float).reshape(-1, 2), psi)


def solve_deformation(
    mesh: TriMesh,
    material: Material,
    dL: np.ndarray,
    config: PenaltyConfig = PenaltyConfig(),
    *,
    V0: np.ndarray | None = None,
    disc: Discretization | None = None,
    full_output: bool = False,
):
    """Penalized Sobolev gradient by damped Newton.

    Without ``V0`` the solve starts from zero and walks through the whole
    ``psi_schedule``; with ``V0`` it starts there at the final ``psi``.
    """
    disc = disc or Discretization(mesh, material)
    n = mesh.n_nodes
    dL = np.asarray(dL, dtype=float).reshape(n, 2)
    pinned = fem.node_dofs(fixed_nodes(mesh))
    free = np.setdiff1d(np.arange(2 * n), pinned)
    M = metric_matrix(disc)
    M_ff = M[free][:, free].tocsc()
    pen = _Penalty(mesh, config.epsilon_gap)
    rhs = (-config.descent_sign * dL).ravel()[free]
    tol = config.newton_tol * (1.0 + np.linalg.norm(dL))

    if V0 is None:
        V = np.zeros((n, 2))
        schedule = config.psi_schedule
    else:
        V = np.array(V0, dtype=float).reshape(n, 2)
        V.ravel()[pinned] = 0.0
        schedule = (config.psi_final,)

    def residual(V, psi):
        r = M_ff @ V.ravel()[free] + rhs
        if psi > 0:
            r = r + pen.residual(V, psi).ravel()[free]
        return r

    iters = 0
    norm = np.inf
    for psi in schedule:
        r = residual(V, psi)
        norm = np.linalg.norm(r)
        for _ in range(config.newton_max_iter):
            if norm <= tol:
                break
            J = M_ff
            if psi > 0:
                J = (M_ff + pen.jacobian(V, psi)[free][:, free]).tocsc()
            step = splu(J, permc_spec="MMD_AT_PLUS_A").solve(-r)
            t = 1.0
            while True:
                trial = V.copy()
                trial.ravel()[free] += t * step
                r_new = residual(trial, psi)
                n_new = np.linalg.norm(r_new)
                if n_new <= (1.0 - config.armijo_c * t) * norm or t < 1e-12:
                    break
                t *= 0.5
            iters += 1
            if n_new >= norm and t < 1e-12:
                break
            V, r, norm = trial, r_new, n_new
    if not norm <= tol:
        raise DeformationError(
            f"Newton did not converge at psi={schedule[-1]:g}: residual {norm:.3e} > {tol:.3e}"
        )
    if full_output:
        return V, DeformationInfo(float(norm), float(tol), iters, float(schedule[-1]))
    return V
