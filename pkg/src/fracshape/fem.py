"""P1 finite-element kernel.

Nodal vector fields are ``(n, 2)`` arrays; their flattened degree-of-freedom
layout is node-major interleaved ``[u0x, u0y, u1x, u1y, ...]``.  All
element loops are vectorized over triangles, and assembly goes through COO
triplets in fixed element order so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import TriMesh


class SingularElementError(ValueError):
    pass


class SolverError(RuntimeError):
    """Raised when a linear system is singular or the solve is inaccurate."""

    def __init__(self, message: str, dof: int | None = None):
        super().__init__(message)
        self.dof = dof


def shape_gradients(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Basis gradients ``G[e, a, :]`` and areas of all triangles.

    Raises :class:`SingularElementError` for zero or negative area.
    """
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero(det <= 0.0)[0])
        raise SingularElementError(f"triangle {bad} is degenerate or inverted")
    G = np.empty((len(det), 3, 2))
    G[:, 0, 0] = y[:, 1] - y[:, 2]
    G[:, 0, 1] = x[:, 2] - x[:, 1]
    G[:, 1, 0] = y[:, 2] - y[:, 0]
    G[:, 1, 1] = x[:, 0] - x[:, 2]
    G[:, 2, 0] = y[:, 0] - y[:, 1]
    G[:, 2, 1] = x[:, 1] - x[:, 0]
    G /= det[:, None, None]
    return G, 0.5 * det


def gradient(mesh: TriMesh, G: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Element-constant gradient ``D[e, i, j] = d field_i / d x_j``."""
    u = np.asarray(field, dtype=float).reshape(mesh.n_nodes, 2)
    return np.einsum("eai,eaj->eij", u[mesh.triangles], G)


def assemble_gradient_pairing(mesh: TriMesh, G: np.ndarray, area: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Nodal vector of the functional ``W -> sum_e area_e K_e : grad W``."""
    local = np.einsum("e,eij,eaj->eai", area, K, G)
    out = np.zeros((mesh.n_nodes, 2))
    np.add.at(out, mesh.triangles, local)
    return out


def element_dofs(triangles: np.ndarray) -> np.ndarray:
    """(m, 6) interleaved dof indices per triangle."""
    t = np.asarray(triangles)
    return np.stack([2 * t, 2 * t + 1], axis=2).reshape(len(t), 6)


def assemble_matrix(triangles: np.ndarray, local: np.ndarray, n_dof: int) -> sp.csr_matrix:
    """Sum element matrices ``local[e]`` (6x6) into a CSR matrix."""
    dofs = element_dofs(triangles)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n_dof, n_dof)).tocsr()
    A.sum_duplicates()
    return A


def scalar_to_vector(local: np.ndarray) -> np.ndarray:
    """Expand 3x3 scalar element matrices to 6x6 acting on both components."""
    m = len(local)
    out = np.zeros((m, 6, 6))
    out[:, 0::2, 0::2] = local
    out[:, 1::2, 1::2] = local
    return out


def mass_local(area: np.ndarray) -> np.ndarray:
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area[:, None, None] * base


def laplace_local(G: np.ndarray, area: np.ndarray) -> np.ndarray:
    return area[:, None, None] * np.einsum("eaj,ebj->eab", G, G)


def node_dofs(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64)
    return np.column_stack([2 * nodes, 2 * nodes + 1]).ravel()


@dataclass(frozen=True)
class SparseSystem:
    """Linear system with Dirichlet rows already reduced to identity."""

    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, dofs: np.ndarray, values) -> SparseSystem:
    """Symmetric elimination of prescribed dofs.

    Constrained rows and columns become identity rows/columns and the
    right-hand side carries the prescribed values there.
    """
    n = A.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64)
    vals = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    u = np.zeros(n)
    u[dofs] = vals
    free = np.ones(n)
    free[dofs] = 0.0
    rhs = np.asarray(b, dtype=float) - A @ u
    rhs[dofs] = vals
    F = sp.diags(free)
    K = (F @ A @ F + sp.diags(1.0 - free)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    return SparseSystem(K, rhs)


class Factorization:
    """Sparse LU factorization reusable for several right-hand sides."""

    def __init__(self, matrix: sp.spmatrix):
        A = sp.csc_matrix(matrix)
        self.matrix = A
        empty = np.flatnonzero(np.diff(A.indptr) == 0)
        if len(empty):
            raise SolverError(f"singular system: column of dof {empty[0]} is empty", int(empty[0]))
        try:
            self._lu = splu(A, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            dof = _offending_dof(A)
            raise SolverError(f"singular system at dof {dof}: {exc}", dof) from None
        self.norm = float(abs(A).sum(axis=0).max())
        U = self._lu.U.diagonal()
        tiny = np.abs(U) <= 1e-14 * self.norm
        if np.any(tiny):
            k = int(np.flatnonzero(tiny)[0])
            dof = int(np.flatnonzero(self._lu.perm_c == k)[0])
            raise SolverError(f"singular pivot at dof {dof}", dof)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        r = self.matrix @ x - b
        bound = 1e-10 * (np.linalg.norm(b) + self.norm * np.linalg.norm(x))
        if not np.all(np.isfinite(x)) or np.linalg.norm(r) > bound:
            raise SolverError(f"inaccurate solve: residual {np.linalg.norm(r):.3e} > {bound:.3e}")
        return x


def _offending_dof(A: sp.csc_matrix) -> int:
    # dense rank-revealing fallback; only reached on the error path
    from scipy.linalg import qr

    _, R, perm = qr(A.toarray(), pivoting=True, mode="economic")
    d = np.abs(np.diag(R))
    small = np.flatnonzero(d <= 1e-12 * d[0])
    return int(perm[small[0] if len(small) else -1])


def solve(system: SparseSystem) -> np.ndarray:
    """Direct solve of ``system`` with a residual check."""
    return Factorization(system.matrix).solve(system.rhs)
