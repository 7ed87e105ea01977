"""
From shape derivative to mesh deformation
=========================================

At a fixed load the crack shape is improved by gradient descent.  One
iteration solves the state and adjoint problems, assembles the shape
derivative as a nodal vector, and converts it into a smooth deformation
field with the Sobolev metric.  A penalty keeps the crack from closing.
"""

import logging

import numpy as np

from fracshape.adjoint import solve_adjoint
from fracshape.deformation import penalty_violation, solve_deformation
from fracshape.elasticity import (
    BoundaryCondition,
    Discretization,
    Material,
    solve_state,
)
from fracshape.mesh import Tag, fixed_nodes, update_coordinates
from fracshape.shapederiv import TERMS, shape_derivative_terms
from fracshape.specimen import SpecimenSpec, generate
from fracshape.verify import bump_field, lagrangian

logging.getLogger("fracshape.specimen").setLevel(logging.ERROR)

mesh = generate(SpecimenSpec())
mat = Material()
bc = BoundaryCondition((0.0, 5e-3))  # 5 um pull on the top edge

# %%
# State and adjoint share one factorized stiffness matrix.

disc = Discretization(mesh, mat)
w = solve_state(mesh, mat, bc, disc)
z = solve_adjoint(mesh, mat, w, disc)
terms = shape_derivative_terms(mesh, mat, w, z, disc)
dL = sum(terms[k] for k in TERMS)

# %%
# Test the derivative on a bump that pushes the tip to the left.

V = bump_field(mesh, (0.49, 0.5), 0.1, np.pi)
h = 1e-6
fd = (lagrangian(update_coordinates(mesh, V, h), mat, bc)
      - lagrangian(update_coordinates(mesh, V, -h), mat, bc)) / (2 * h)
print(f"dL[V] = {np.sum(dL * V):+.8e}   finite difference {fd:+.8e}")
for k in TERMS:
    print(f"  term {k:<14} {np.sum(terms[k] * V):+.4e}")

# %%
# The deformation field: zero on the outer boundary and the initial slit,
# largest around the tip.

W = solve_deformation(mesh, mat, dL, disc=disc)
mag = np.hypot(*W.T)
tip = mesh.nodes_with(Tag.CRACK)
print(f"\n|W| max {mag.max():.3e} at {mesh.nodes[np.argmax(mag)].round(3)}; "
      f"mean on tip nodes {mag[tip].mean():.3e}; on pinned nodes {mag[fixed_nodes(mesh)].max():.1e}")
print(f"descent: dL[W] = {np.sum(dL * W):.3e}; penalty violation {penalty_violation(mesh, W):.2e}")
print(f"tip nodes move left on average: {W[tip, 0].mean():.3e}")
