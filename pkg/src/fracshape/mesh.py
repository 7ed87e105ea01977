"""Triangular mesh container, boundary tagging, quality and coordinate updates.

A :class:`TriMesh` is immutable: node and connectivity arrays are marked
read-only and every geometric update returns a new instance.  Boundary
edges are stored oriented as they appear in their (counter-clockwise)
adjacent triangle, so the domain always lies to the left of an edge and the
outward normal is the edge tangent rotated clockwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np
import shapely

TAG_TOL = 1e-9
# lattice spacing used by remesh, relative to target_h
REMESH_SPACING = 0.94
# crack edges shorter than this fraction of target_h are merged on remesh
MIN_CRACK_EDGE = 0.05


class MeshError(ValueError):
    """Structural or geometric problem with a mesh."""


class Tag(IntEnum):
    BOTTOM = 0
    TOP = 1
    LEFT = 2
    RIGHT = 3
    CRACK = 4
    CRACK_FIXED = 5

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, text: str) -> Tag:
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown boundary tag {text!r}") from None


OUTER_TAGS = (Tag.BOTTOM, Tag.TOP, Tag.LEFT, Tag.RIGHT)
CRACK_TAGS = (Tag.CRACK, Tag.CRACK_FIXED)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """P1 triangle mesh with tagged boundary.

    Parameters
    ----------
    nodes : (n, 2) float array
        Node coordinates in mm.
    triangles : (m, 3) int array
        Counter-clockwise node indices.
    edges : (b, 2) int array
        Boundary edges, oriented with the domain on the left.
    tags : (b,) int array
        :class:`Tag` value per boundary edge.
    edge_elements : (b,) int array
        Index of the single triangle adjacent to each boundary edge.
    delta : float or None
        Slit half-width used for the ``CRACK_FIXED`` predicate.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tags: np.ndarray
    edge_elements: np.ndarray
    delta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(np.asarray(self.nodes, dtype=float)))
        object.__setattr__(self, "triangles", _readonly(np.asarray(self.triangles, dtype=np.int64)))
        object.__setattr__(self, "edges", _readonly(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)))
        object.__setattr__(self, "tags", _readonly(np.asarray(self.tags, dtype=np.int64)))
        object.__setattr__(
            self, "edge_elements", _readonly(np.asarray(self.edge_elements, dtype=np.int64))
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        return _readonly(signed_areas(self.nodes, self.triangles))

    @property
    def area(self) -> float:
        return float(np.sum(self.signed_areas))

    @property
    def has_inverted(self) -> bool:
        return bool(np.any(self.signed_areas <= 0.0))

    @property
    def has_simple_boundary(self) -> bool:
        """False if boundary loops touch or cross, e.g. crack faces folded over each other."""
        try:
            loops = [self.nodes[self.edges[lp, 0]] for lp in boundary_loops(self)]
        except MeshError:
            return False
        areas = [_loop_area(p) for p in loops]
        outer = int(np.argmax(np.abs(areas)))
        polygon = shapely.Polygon(loops[outer], [p for i, p in enumerate(loops) if i != outer])
        return bool(polygon.is_valid)

    def edges_with(self, *tags: Tag) -> np.ndarray:
        """Indices of boundary edges carrying any of ``tags``."""
        return np.flatnonzero(np.isin(self.tags, np.asarray(tags, dtype=np.int64)))

    def nodes_with(self, *tags: Tag) -> np.ndarray:
        """Sorted node indices touched by boundary edges with any of ``tags``."""
        return np.unique(self.edges[self.edges_with(*tags)].ravel())

    @cached_property
    def edge_geometry(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(unit tangents, unit outward normals, lengths) of all boundary edges."""
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        if np.any(length <= 0.0):
            bad = int(np.flatnonzero(length <= 0.0)[0])
            raise MeshError(f"boundary edge {bad} has zero length")
        t = d / length[:, None]
        n = np.column_stack([t[:, 1], -t[:, 0]])
        for a in (t, n, length):
            a.flags.writeable = False
        return t, n, length

    def with_nodes(self, nodes: np.ndarray) -> TriMesh:
        """Same connectivity and tags, new coordinates."""
        return TriMesh(nodes, self.triangles, self.edges, self.tags, self.edge_elements, self.delta)

    def validate(self) -> None:
        """Raise :class:`MeshError` if a structural invariant is violated."""
        n = self.n_nodes
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise MeshError("triangle references a node index out of range")
        if self.has_inverted:
            bad = int(np.flatnonzero(self.signed_areas <= 0.0)[0])
            raise MeshError(f"triangle {bad} is not counter-clockwise (signed area <= 0)")
        edges, elems = boundary_topology(self.triangles)
        mine = {tuple(e) for e in self.edges.tolist()}
        theirs = {tuple(e) for e in edges.tolist()}
        if mine != theirs:
            raise MeshError("boundary edge list does not match triangle connectivity")
        # every node on a boundary loop has in-degree == out-degree
        deg = np.zeros(n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], -1)
        if np.any(deg):
            raise MeshError("boundary edges do not form closed loops")


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def boundary_topology(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boundary edges (oriented as in their triangle) and adjacent triangles.

    Raises :class:`MeshError` for edges shared by three or more triangles.
    """
    tri = np.asarray(triangles, dtype=np.int64)
    m = len(tri)
    half = np.stack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=1).reshape(-1, 2)
    owner = np.repeat(np.arange(m), 3)
    key = np.sort(half, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise MeshError("non-manifold edge shared by three or more triangles")
    on_boundary = counts[inverse] == 1
    idx = np.flatnonzero(on_boundary)
    return half[idx], owner[idx]


def _tag_edges(nodes: np.ndarray, edges: np.ndarray, delta: float | None) -> np.ndarray:
    pa = nodes[edges[:, 0]]
    pb = nodes[edges[:, 1]]

    def both(coord: int, value: float) -> np.ndarray:
        return (np.abs(pa[:, coord] - value) <= TAG_TOL) & (np.abs(pb[:, coord] - value) <= TAG_TOL)

    tags = np.full(len(edges), int(Tag.CRACK), dtype=np.int64)
    # assign in reverse priority so bottom/top win at corners
    for tag, coord, value in (
        (Tag.RIGHT, 0, 1.0),
        (Tag.LEFT, 0, 0.0),
        (Tag.TOP, 1, 1.0),
        (Tag.BOTTOM, 1, 0.0),
    ):
        tags[both(coord, value)] = int(tag)
    if delta is not None:
        crack = tags == int(Tag.CRACK)
        right = (pa[:, 0] >= 0.5 - TAG_TOL) & (pb[:, 0] >= 0.5 - TAG_TOL)
        on_face = both(1, 0.5 - delta) | both(1, 0.5 + delta)
        tags[crack & right & on_face] = int(Tag.CRACK_FIXED)
    return tags


def compute_boundary(
    nodes: np.ndarray, triangles: np.ndarray, delta: float | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary edges, their geometric tags and adjacent triangles."""
    edges, elems = boundary_topology(triangles)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges, elems = edges[order], elems[order]
    return edges, _tag_edges(np.asarray(nodes, dtype=float), edges, delta), elems


def build_mesh(nodes: np.ndarray, triangles: np.ndarray, delta: float | None = None) -> TriMesh:
    """Construct a :class:`TriMesh`, orienting triangles CCW and tagging the boundary."""
    nodes = np.asarray(nodes, dtype=float)
    tri = np.array(triangles, dtype=np.int64)
    flip = signed_areas(nodes, tri) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    edges, tags, elems = compute_boundary(nodes, tri, delta)
    return TriMesh(nodes, tri, edges, tags, elems, delta)


def outward_normal(mesh: TriMesh, edge: int) -> tuple[np.ndarray, float]:
    """Unit outward normal and length of boundary edge ``edge``."""
    a, b = mesh.edges[edge]
    d = mesh.nodes[b] - mesh.nodes[a]
    length = float(np.hypot(*d))
    if length <= 0.0:
        raise MeshError(f"boundary edge {edge} has zero length")
    n = np.array([d[1], -d[0]]) / length
    # orientation from the third vertex, robust even for inverted elements
    tri = mesh.triangles[mesh.edge_elements[edge]]
    third = mesh.nodes[tri[~np.isin(tri, (a, b))][0]]
    if np.dot(n, third - mesh.nodes[a]) > 0:
        n = -n
    return n, length


def scaled_jacobians(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Per-triangle minimum corner scaled Jacobian (1 for equilateral)."""
    p = nodes[triangles]
    worst = np.full(len(triangles), np.inf)
    for i in range(3):
        o = p[:, i]
        ea = p[:, (i + 1) % 3] - o
        eb = p[:, (i + 2) % 3] - o
        cross = ea[:, 0] * eb[:, 1] - ea[:, 1] * eb[:, 0]
        norm = np.hypot(ea[:, 0], ea[:, 1]) * np.hypot(eb[:, 0], eb[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.where(norm > 0, cross / norm, 0.0)
        worst = np.minimum(worst, q)
    return 2.0 / np.sqrt(3.0) * worst


def min_scaled_jacobian(mesh: TriMesh) -> float:
    if mesh.n_triangles == 0:
        raise MeshError("empty mesh")
    return float(np.min(scaled_jacobians(mesh.nodes, mesh.triangles)))


def fixed_nodes(mesh: TriMesh) -> np.ndarray:
    """Nodes that may not move: outer boundary and CrackFixed nodes."""
    return mesh.nodes_with(*OUTER_TAGS, Tag.CRACK_FIXED)


def update_coordinates(mesh: TriMesh, V: np.ndarray, tau: float) -> TriMesh:
    """Perturbation of identity ``x -> x + tau V``.

    Inverted triangles are allowed in the result; check ``has_inverted``.
    """
    V = np.asarray(V, dtype=float).reshape(mesh.n_nodes, 2)
    pinned = fixed_nodes(mesh)
    if np.any(V[pinned] != 0.0):
        raise ValueError("V must vanish on outer-boundary and CrackFixed nodes")
    if tau == 0.0:
        return mesh
    return mesh.with_nodes(mesh.nodes + tau * V)


def _loop_area(p: np.ndarray) -> float:
    return 0.5 * float(np.dot(p[:, 0], np.roll(p[:, 1], -1)) - np.dot(np.roll(p[:, 0], -1), p[:, 1]))


def boundary_loops(mesh: TriMesh) -> list[np.ndarray]:
    """Boundary edge indices grouped into closed loops, in traversal order."""
    nxt = {int(a): i for i, (a, _) in enumerate(mesh.edges)}
    if len(nxt) != len(mesh.edges):
        raise MeshError("boundary is not a union of simple loops (pinched vertex)")
    seen = np.zeros(len(mesh.edges), dtype=bool)
    loops = []
    for start in range(len(mesh.edges)):
        if seen[start]:
            continue
        loop = []
        e = start
        while not seen[e]:
            seen[e] = True
            loop.append(e)
            e = nxt.get(int(mesh.edges[e, 1]))
            if e is None:
                raise MeshError("open boundary chain")
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def remesh(mesh: TriMesh, target_h: float, *, min_angle: float = 26.0) -> TriMesh:
    """Re-triangulate the region bounded by ``mesh``'s boundary loops.

    Crack vertices are kept, except that free crack vertices closer together
    than ``MIN_CRACK_EDGE * target_h`` are thinned out. The outer sides are
    re-sampled at ``target_h``.
    """
    from .triangulate import triangulate

    loops = [
        _merge_short_edges(*_resample_loop(mesh, loop, REMESH_SPACING * target_h), MIN_CRACK_EDGE * target_h)
        for loop in boundary_loops(mesh)
    ]
    nodes, tris = triangulate(loops, REMESH_SPACING * target_h, min_angle=min_angle)
    nodes = _snap(nodes)
    return build_mesh(nodes, tris, mesh.delta)


def _snap(nodes: np.ndarray) -> np.ndarray:
    nodes = nodes.copy()
    for v in (0.0, 1.0):
        nodes[np.abs(nodes - v) <= TAG_TOL] = v
    return nodes


def _corner_area(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    return abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _merge_short_edges(pts: np.ndarray, free: np.ndarray, min_len: float) -> np.ndarray:
    """Drop free vertices until no edge touching one is shorter than ``min_len``.

    Of the two ends of the shortest offending edge, the free one spanning the
    smaller triangle with its neighbours goes, so sharp corners survive.
    """
    pts, free = list(pts), list(free)
    while len(pts) > 3:
        n = len(pts)
        lens = [np.hypot(*(pts[(i + 1) % n] - pts[i])) for i in range(n)]
        cand = [i for i in np.argsort(lens, kind="stable") if lens[i] < min_len and (free[i] or free[(i + 1) % n])]
        if not cand:
            break
        i = int(cand[0])

        ends = [k for k in (i, (i + 1) % n) if free[k]]
        k = min(ends, key=lambda k: _corner_area(pts[k - 1], pts[k], pts[(k + 1) % len(pts)]))
        del pts[k], free[k]
    return np.array(pts)


def _resample_loop(mesh: TriMesh, loop: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of one loop, with a mask of free crack vertices.

    Crack vertices are kept, straight outer runs resampled.
    """
    tags = mesh.tags[loop]
    starts = mesh.edges[loop, 0]
    ends = mesh.edges[loop, 1]
    outer = np.isin(tags, np.asarray(OUTER_TAGS))
    # corners: vertices where the tag changes
    n = len(loop)
    change = tags != np.roll(tags, 1)
    if not np.any(change):
        change[0] = True
    first = int(np.flatnonzero(change)[0])
    order = np.roll(np.arange(n), -first)
    free_edge = tags == Tag.CRACK
    pts: list[np.ndarray] = []
    free: list[bool] = []
    i = 0
    while i < n:
        e = order[i]
        if not outer[e]:
            pts.append(mesh.nodes[starts[e]])
            free.append(bool(free_edge[e] and free_edge[order[i - 1]]))
            i += 1
            continue
        j = i
        while j + 1 < n and tags[order[j + 1]] == tags[e]:
            j += 1
        a = mesh.nodes[starts[e]]
        b = mesh.nodes[ends[order[j]]]
        k = max(1, int(np.ceil(np.hypot(*(b - a)) / h - 1e-9)))
        for s in range(k):
            pts.append(a + (b - a) * (s / k))
            free.append(False)
        i = j + 1
    return np.array(pts), np.array(free)
