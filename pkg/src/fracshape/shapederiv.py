"""Shape derivative of the Lagrangian as a nodal vector.

For a perturbation field ``V`` (nodal, P1) the derivative is
``dL[V] = sum(dL * V)``.  Volume terms are written as
``sum_e area_e K_e : grad V`` with element-constant coefficient matrices:

    (i)   -lam max(0, tr eps(w)) grad(w)^T
    (ii)  -(grad(w)^T sigma(z) + grad(z)^T sigma(w))
    (iii) -2 mu grad(w)^T S_mu               (S_mu from the spectral split)
    (iv)  (psi(w) + sigma(w):eps(z) - nu) I  (the div V terms)

and the crack term (v) is ``Gc/2 * sum_edges len * t^T grad(V) t``.  With
fixed nodal values of ``w`` and ``z`` these are the exact derivatives of
the discrete energies with respect to node positions.
"""

from __future__ import annotations

import numpy as np

from . import fem
from .elasticity import Discretization, Material, energy_density, stress
from .mesh import CRACK_TAGS, TriMesh
from .spectral import SymTensor2, split, tensile_stress_tensor

TERMS = ("i", "ii", "iii", "iv_bulk", "iv_constraint", "iv_reg", "v")

# which terms make up the derivative of each energy piece
ENERGY_GROUPS = {
    "bulk": ("i", "iii", "iv_bulk"),
    "constraint": ("ii", "iv_constraint"),
    "reg": ("iv_reg",),
    "frac": ("v",),
}


def _check(mesh: TriMesh, *fields: np.ndarray) -> list[np.ndarray]:
    out = []
    for f in fields:
        f = np.asarray(f, dtype=float)
        if f.size != 2 * mesh.n_nodes:
            raise ValueError(f"field has {f.size} entries, mesh needs {2 * mesh.n_nodes}")
        out.append(f.reshape(mesh.n_nodes, 2))
    return out


def crack_vector(mesh: TriMesh, material: Material, disc: Discretization | None = None) -> np.ndarray:
    """Nodal vector of the crack-boundary term (v)."""
    disc = disc or Discretization(mesh, material)
    edges = mesh.edges_with(*CRACK_TAGS)
    t, _, length = mesh.edge_geometry
    tt = np.einsum("ei,ej->eij", t[edges], t[edges])
    elem = mesh.edge_elements[edges]
    local = 0.5 * material.gc * np.einsum("e,eij,eaj->eai", length[edges], tt, disc.G[elem])
    out = np.zeros((mesh.n_nodes, 2))
    np.add.at(out, mesh.triangles[elem], local)
    return out


def crack_boundary_term(mesh: TriMesh, material: Material, V: np.ndarray) -> float:
    """``Gc/2 * integral over the crack of the tangential divergence of V``."""
    (V,) = _check(mesh, V)
    return float(np.sum(crack_vector(mesh, material) * V))


def shape_derivative_terms(
    mesh: TriMesh, material: Material, w: np.ndarray, z: np.ndarray, disc: Discretization | None = None
) -> dict[str, np.ndarray]:
    """Nodal vectors of the individual terms, keyed as in :data:`TERMS`."""
    w, z = _check(mesh, w, z)
    disc = disc or Discretization(mesh, material)
    lam, mu = material.lam, material.mu
    Dw = disc.grad(w)
    Dz = disc.grad(z)
    Ew = 0.5 * (Dw + np.swapaxes(Dw, 1, 2))
    Ez = 0.5 * (Dz + np.swapaxes(Dz, 1, 2))
    DwT = np.swapaxes(Dw, 1, 2)
    DzT = np.swapaxes(Dz, 1, 2)
    sw = stress(material, Ew)
    sz = stress(material, Ez)
    tr = Ew[:, 0, 0] + Ew[:, 1, 1]
    eye = np.eye(2)[None]
    if material.strain_split:
        t = SymTensor2.from_matrix(Ew)
        S_mu, _, _ = tensile_stress_tensor(t, split(t))
        tr_plus = np.maximum(tr, 0.0)
    else:
        S_mu, tr_plus = Ew, tr
    coeff = {
        "i": -lam * tr_plus[:, None, None] * DwT,
        "ii": -(DwT @ sz + DzT @ sw),
        "iii": -2.0 * mu * (DwT @ S_mu),
        "iv_bulk": energy_density(material, Ew)[:, None, None] * eye,
        "iv_constraint": np.einsum("eij,eij->e", sw, Ez)[:, None, None] * eye,
        "iv_reg": np.full((mesh.n_triangles, 1, 1), -material.nu) * eye,
    }
    out = {k: fem.assemble_gradient_pairing(mesh, disc.G, disc.area, K) for k, K in coeff.items()}
    out["v"] = crack_vector(mesh, material, disc)
    return out


def shape_derivative_vector(
    mesh: TriMesh, material: Material, w: np.ndarray, z: np.ndarray, disc: Discretization | None = None
) -> np.ndarray:
    """Total shape derivative as an ``(n, 2)`` nodal vector."""
    terms = shape_derivative_terms(mesh, material, w, z, disc)
    total = np.zeros((mesh.n_nodes, 2))
    for k in TERMS:
        total += terms[k]
    return total
