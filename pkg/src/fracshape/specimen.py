"""Single-edge-notched specimen geometry and mesh generation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .mesh import TriMesh, build_mesh, min_scaled_jacobian
from .triangulate import triangulate

log = logging.getLogger(__name__)

MAX_DELTA = 0.05
ROUND_TIP_SEGMENTS = 8


class Tip(str, Enum):
    FLAT = "flat"
    ROUND = "round"
    POINTY = "pointy"


class Level(str, Enum):
    VERY_COARSE = "very-coarse"
    COARSE = "coarse"
    MEDIUM = "medium"
    FINE = "fine"
    VERY_FINE = "very-fine"

    @property
    def target_h(self) -> float:
        return TARGET_H[self]


TARGET_H = {
    Level.VERY_COARSE: 0.085,
    Level.COARSE: 0.062,
    Level.MEDIUM: 0.045,
    Level.FINE: 0.033,
    Level.VERY_FINE: 0.020,
}

# lattice spacing relative to target_h, calibrated against reference node/element counts
SPACING_FACTOR = {
    Level.VERY_COARSE: 0.97,
    Level.COARSE: 0.94,
    Level.MEDIUM: 0.94,
    Level.FINE: 0.92,
    Level.VERY_FINE: 0.92,
}


@dataclass(frozen=True)
class SpecimenSpec:
    tip: Tip = Tip.ROUND
    delta: float = 1e-2
    level: Level = Level.MEDIUM

    def __post_init__(self):
        object.__setattr__(self, "tip", Tip(self.tip))
        object.__setattr__(self, "level", Level(self.level))
        if not (0.0 < self.delta <= MAX_DELTA):
            raise ValueError(f"delta must lie in (0, {MAX_DELTA}], got {self.delta}")

    @property
    def target_h(self) -> float:
        return self.level.target_h


def tip_points(tip: Tip, delta: float) -> np.ndarray:
    """Tip vertices from the lower face (0.5, 0.5-δ) up to the upper face."""
    lo = np.array([0.5, 0.5 - delta])
    hi = np.array([0.5, 0.5 + delta])
    if tip is Tip.FLAT:
        return np.array([lo, hi])
    if tip is Tip.POINTY:
        return np.array([lo, [0.5 - delta, 0.5], hi])
    theta = np.linspace(0.0, np.pi, ROUND_TIP_SEGMENTS + 1)
    pts = np.column_stack([0.5 - delta * np.sin(theta), 0.5 - delta * np.cos(theta)])
    pts[0], pts[-1] = lo, hi
    pts[ROUND_TIP_SEGMENTS // 2] = [0.5 - delta, 0.5]
    return pts


def boundary_polygon(spec: SpecimenSpec) -> np.ndarray:
    """Counter-clockwise vertex loop of the specimen's physical domain."""
    d = spec.delta
    tip = tip_points(spec.tip, d)
    return np.vstack(
        [
            [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5 - d]],
            tip,
            [[1.0, 0.5 + d], [1.0, 1.0], [0.0, 1.0]],
        ]
    )


def generate(spec: SpecimenSpec) -> TriMesh:
    """Triangulate the notched unit square described by ``spec``."""
    h = spec.target_h
    if spec.delta < h / 4:
        log.warning("delta=%g is below target_h/4=%g; the tip is under-resolved", spec.delta, h / 4)
    nodes, tris = triangulate([boundary_polygon(spec)], SPACING_FACTOR[spec.level] * h)
    mesh = build_mesh(nodes, tris, spec.delta)
    mesh.validate()
    q = min_scaled_jacobian(mesh)
    if q < 0.30:
        raise RuntimeError(f"generated mesh quality {q:.3f} below 0.30")
    return mesh
