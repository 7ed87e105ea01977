"""Brittle fracture propagation as shape optimization on P1 triangle meshes."""

from .elasticity import BoundaryCondition, Material
from .mesh import Tag, TriMesh
from .specimen import Level, SpecimenSpec, Tip, generate

__all__ = ["BoundaryCondition", "Level", "Material", "SpecimenSpec", "Tag", "Tip", "TriMesh", "generate"]
__version__ = "0.1.0"
