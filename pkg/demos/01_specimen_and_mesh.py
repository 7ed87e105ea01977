"""
Notched specimens and their meshes
==================================

The unit square carries a horizontal slit from the right edge to the
centre.  Three tip shapes are available; the slit faces are tagged
``crack_fixed`` and the tip faces ``crack``.
"""

import logging
import tempfile
from pathlib import Path

import numpy as np

from fracshape.io import read_mesh, write_mesh
from fracshape.mesh import CRACK_TAGS, Tag, min_scaled_jacobian
from fracshape.specimen import SpecimenSpec, generate

# the 0.01 mm round tip is finer than the mesher's resolution hint; that is expected here
logging.getLogger("fracshape.specimen").setLevel(logging.ERROR)

# %%
# Build one specimen per tip shape at the coarse level.

for tip in ("flat", "round", "pointy"):
    mesh = generate(SpecimenSpec(tip, 1e-2, "coarse"))
    _, _, length = mesh.edge_geometry
    crack = length[mesh.edges_with(*CRACK_TAGS)].sum()
    print(f"{tip:>6}: {mesh.n_nodes:4d} nodes  {mesh.n_triangles:4d} triangles  "
          f"area {mesh.area:.5f}  crack length {crack:.4f}  min quality {min_scaled_jacobian(mesh):.2f}")

# %%
# The medium round-tip mesh is the one the benchmarks use.  Element size
# grades from the tip outwards.

mesh = generate(SpecimenSpec())
centroids = mesh.nodes[mesh.triangles].mean(axis=1)
size = np.sqrt(2 * mesh.signed_areas)
near = np.hypot(*(centroids - [0.5, 0.5]).T) < 0.1
print(f"\nmedium: {mesh.n_nodes} nodes, mean element size near tip {size[near].mean():.4f}, "
      f"elsewhere {size[~near].mean():.4f}")

# %%
# Boundary edges carry tags, and every edge has an outward unit normal.

_, normals, _ = mesh.edge_geometry
for tag in Tag:
    e = mesh.edges_with(tag)
    print(f"{tag.label:<11} {len(e):4d} edges, mean normal {normals[e].mean(axis=0).round(3)}")

# %%
# Meshes round-trip through the text format without loss.

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "medium.fm"
    write_mesh(path, mesh)
    back = read_mesh(path)
    print(f"\nround trip identical: {np.array_equal(back.nodes, mesh.nodes)}; "
          f"file has {len(path.read_text().splitlines())} lines")
