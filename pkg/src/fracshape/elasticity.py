"""Linear elasticity on P1 triangles with spectrally split bulk energy."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fem
from .mesh import CRACK_TAGS, Tag, TriMesh
from .spectral import SymTensor2, split, tensile_stress_tensor


@dataclass(frozen=True)
class Material:
    """Material and shape-functional parameters (N, mm units).

    ``strain_split=False`` replaces the split energy by the classical one; it
    exists for cross-checks only.
    """

    lam: float = 121.15e3
    mu: float = 80.77e3
    gc: float = 2.7
    nu: float = 10.0
    a_metric: float = 10.0
    strain_split: bool = True

    def __post_init__(self):
        for name in ("lam", "mu", "gc", "nu", "a_metric"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass(frozen=True)
class BoundaryCondition:
    """Top displacement in mm; bottom is clamped, other edges are traction free."""

    top: tuple[float, float] = (0.0, 0.0)


class Discretization:
    """Per-mesh cache of element geometry, stiffness and its factorization."""

    def __init__(self, mesh: TriMesh, material: Material):
        self.mesh = mesh
        self.material = material
        self.G, self.area = fem.shape_gradients(mesh)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return fem.assemble_matrix(self.mesh.triangles, self._local_stiffness(), 2 * self.mesh.n_nodes)

    def _local_stiffness(self) -> np.ndarray:
        lam, mu = self.material.lam, self.material.mu
        G = self.G
        m = len(G)
        B = np.zeros((m, 3, 6))
        B[:, 0, 0::2] = G[:, :, 0]
        B[:, 1, 1::2] = G[:, :, 1]
        B[:, 2, 0::2] = G[:, :, 1]
        B[:, 2, 1::2] = G[:, :, 0]
        D = np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])
        return self.area[:, None, None] * np.einsum("eki,kl,elj->eij", B, D, B)

    @cached_property
    def dirichlet_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        bottom = self.mesh.nodes_with(Tag.BOTTOM)
        top = self.mesh.nodes_with(Tag.TOP)
        if len(bottom) == 0 or len(top) == 0:
            raise fem.SolverError("floating structure: Bottom and Top must both be constrained")
        return bottom, top

    @cached_property
    def dirichlet_dofs(self) -> np.ndarray:
        bottom, top = self.dirichlet_nodes
        return np.concatenate([fem.node_dofs(bottom), fem.node_dofs(top)])

    @cached_property
    def system_matrix(self) -> sp.csr_matrix:
        n = 2 * self.mesh.n_nodes
        return fem.apply_dirichlet(self.stiffness, np.zeros(n), self.dirichlet_dofs, 0.0).matrix

    @cached_property
    def factorization(self) -> fem.Factorization:
        return fem.Factorization(self.system_matrix)

    def dirichlet_values(self, bc: BoundaryCondition) -> np.ndarray:
        bottom, top = self.dirichlet_nodes
        vals = np.zeros((len(bottom) + len(top), 2))
        vals[len(bottom) :] = bc.top
        return vals.ravel()

    def grad(self, field: np.ndarray) -> np.ndarray:
        return fem.gradient(self.mesh, self.G, field)

    def strain(self, field: np.ndarray) -> np.ndarray:
        D = self.grad(field)
        return 0.5 * (D + np.swapaxes(D, 1, 2))


def _discretization(mesh: TriMesh, material: Material) -> Discretization:
    return Discretization(mesh, material)


def element_strain(mesh: TriMesh, w: np.ndarray, triangle: int | None = None) -> SymTensor2:
    """Constant strain ``sym(grad w)`` of one triangle, or all of them."""
    G, _ = fem.shape_gradients(mesh)
    D = fem.gradient(mesh, G, w)
    E = 0.5 * (D + np.swapaxes(D, 1, 2))
    if triangle is not None:
        E = E[triangle]
    return SymTensor2.from_matrix(E)


def stress(material: Material, eps: np.ndarray) -> np.ndarray:
    """Hooke's law ``2 mu eps + lam tr(eps) I`` for (..., 2, 2) strains."""
    eps = np.asarray(eps, dtype=float)
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    return 2.0 * material.mu * eps + material.lam * tr[..., None, None] * np.eye(2)


def solve_state(
    mesh: TriMesh, material: Material, bc: BoundaryCondition, disc: Discretization | None = None
) -> np.ndarray:
    """Displacement field ``(n, 2)`` solving the discrete state equation."""
    disc = disc or _discretization(mesh, material)
    n = 2 * mesh.n_nodes
    dofs = disc.dirichlet_dofs
    vals = disc.dirichlet_values(bc)
    u = np.zeros(n)
    u[dofs] = vals
    rhs = -(disc.stiffness @ u)
    rhs[dofs] = vals
    w = disc.factorization.solve(rhs)
    return w.reshape(-1, 2)


def energy_density(material: Material, E: np.ndarray) -> np.ndarray:
    """Bulk energy density of (m, 2, 2) strains."""
    t = SymTensor2.from_matrix(E)
    lam, mu = material.lam, material.mu
    if not material.strain_split:
        return 0.5 * lam * t.trace**2 + mu * np.einsum("...ij,...ij->...", E, E)
    return 0.5 * lam * np.maximum(t.trace, 0.0) ** 2 + mu * split(t).energy_trace()


def split_stress(material: Material, E: np.ndarray) -> np.ndarray:
    """Tensor ``S`` with ``F[w~] = sum area S : eps(w~)`` (adjoint right-hand side)."""
    t = SymTensor2.from_matrix(E)
    lam, mu = material.lam, material.mu
    if not material.strain_split:
        return stress(material, E)
    S_mu, _, _ = tensile_stress_tensor(t, split(t))
    return lam * np.maximum(t.trace, 0.0)[:, None, None] * np.eye(2) + 2.0 * mu * S_mu


def bulk_energy(mesh: TriMesh, material: Material, w: np.ndarray, disc: Discretization | None = None) -> float:
    disc = disc or _discretization(mesh, material)
    return float(np.dot(disc.area, energy_density(material, disc.strain(w))))


def crack_length(mesh: TriMesh) -> float:
    _, _, length = mesh.edge_geometry
    return float(np.sum(length[mesh.edges_with(*CRACK_TAGS)]))


def fracture_energy(mesh: TriMesh, material: Material) -> float:
    return 0.5 * material.gc * crack_length(mesh)


def reg_energy(mesh: TriMesh, material: Material) -> float:
    return material.nu * mesh.area


def objective(mesh: TriMesh, material: Material, w: np.ndarray, disc: Discretization | None = None) -> float:
    """``J = E_bulk + E_frac - E_reg``."""
    return bulk_energy(mesh, material, w, disc) + fracture_energy(mesh, material) - reg_energy(mesh, material)


def boundary_force(mesh: TriMesh, material: Material, w: np.ndarray, disc: Discretization | None = None) -> np.ndarray:
    """Resultant traction on the Top edges, from the adjacent element stresses."""
    top = mesh.edges_with(Tag.TOP)
    if len(top) == 0:
        raise ValueError("mesh has no Top edges")
    disc = disc or _discretization(mesh, material)
    sig = stress(material, disc.strain(w)[mesh.edge_elements[top]])
    _, n, length = mesh.edge_geometry
    return np.einsum("eij,ej,e->i", sig, n[top], length[top])
