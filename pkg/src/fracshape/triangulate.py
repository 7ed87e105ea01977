"""Quality triangulation of polygonal regions.

The Delaunay kernel is :class:`scipy.spatial.Delaunay`.  On top of it:

* interior seeding with a hexagonal lattice at the target spacing,
* boundary recovery by splitting segments missing from the triangulation,
* Ruppert-style refinement: circumcenters of poor triangles are inserted,
  unless they encroach upon (or fall beyond) a boundary segment, in which
  case that segment is split at its midpoint instead.

Encroachment only counts from the domain side of a segment, so thin
slits do not force refinement across the gap.
"""

from __future__ import annotations

import numpy as np
import shapely
from scipy.spatial import Delaunay, cKDTree


class GeometryError(ValueError):
    """Input boundary cannot be triangulated (e.g. self-intersecting)."""


def _signed_area(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _seg_point_dist2(P: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared distance from each point in P to the nearest segment AB."""
    best = np.full(len(P), np.inf)
    d = B - A
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    for s in range(0, len(P), 2048):
        p = P[s : s + 2048, None, :]
        t = np.clip(np.einsum("pij,ij->pi", p - A, d) / dd, 0.0, 1.0)
        q = A + t[..., None] * d
        best[s : s + 2048] = np.min(np.sum((p - q) ** 2, axis=-1), axis=1)
    return best


class _PSLG:
    """Points plus boundary segments; the domain lies left of each segment."""

    def __init__(self, loops: list[np.ndarray], polygon: shapely.Polygon):
        self.polygon = polygon
        shapely.prepare(polygon)
        pts, segs = [], []
        offset = 0
        for loop in loops:
            k = len(loop)
            pts.append(loop)
            idx = np.arange(k) + offset
            segs.append(np.column_stack([idx, np.roll(idx, -1)]))
            offset += k
        self.points = np.vstack(pts)
        self.segments = np.vstack(segs)
        self.n_boundary = len(self.points)

    def add_points(self, p: np.ndarray) -> np.ndarray:
        start = len(self.points)
        self.points = np.vstack([self.points, p])
        return np.arange(start, start + len(p))

    def split_segments(self, which: np.ndarray) -> None:
        which = np.unique(which)
        s = self.segments[which]
        mid = 0.5 * (self.points[s[:, 0]] + self.points[s[:, 1]])
        new = self.add_points(mid)
        keep = np.ones(len(self.segments), dtype=bool)
        keep[which] = False
        self.segments = np.vstack(
            [self.segments[keep], np.column_stack([s[:, 0], new]), np.column_stack([new, s[:, 1]])]
        )

    def seg_geometry(self):
        a = self.points[self.segments[:, 0]]
        b = self.points[self.segments[:, 1]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        return a, b, 0.5 * (a + b), 0.5 * length, normal


def _delaunay(points: np.ndarray) -> np.ndarray:
    return Delaunay(points, qhull_options="Qbb Qc Qz Q12 Qt").simplices


def _missing_segments(simplices: np.ndarray, segments: np.ndarray, n: int) -> np.ndarray:
    e = np.vstack([simplices[:, [0, 1]], simplices[:, [1, 2]], simplices[:, [2, 0]]])
    e = np.sort(e, axis=1)
    keys = np.unique(e[:, 0] * n + e[:, 1])
    s = np.sort(segments, axis=1)
    return np.flatnonzero(~np.isin(s[:, 0] * n + s[:, 1], keys))


def _circumcenters(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    d = 2.0 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    a2 = np.sum(a * a, axis=1)
    b2 = np.sum(b * b, axis=1)
    ux = (b[:, 1] * a2 - a[:, 1] * b2) / d
    uy = (a[:, 0] * b2 - b[:, 0] * a2) / d
    c = np.column_stack([ux, uy])
    return p[:, 0] + c, np.hypot(ux, uy)


def _angles(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum corner angle (degrees) and shortest edge per triangle."""
    e = [p[:, (i + 1) % 3] - p[:, i] for i in range(3)]
    ln = np.stack([np.hypot(v[:, 0], v[:, 1]) for v in e], axis=1)
    ang = []
    for i in range(3):
        u, v = e[i], -e[(i + 2) % 3]
        c = np.sum(u * v, axis=1) / np.maximum(ln[:, i] * ln[:, (i + 2) % 3], 1e-300)
        ang.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
    return np.min(np.stack(ang, axis=1), axis=1), np.min(ln, axis=1)


def _hex_lattice(bounds, s: float) -> np.ndarray:
    x0, y0, x1, y1 = bounds
    dy = s * np.sqrt(3.0) / 2.0
    rows = []
    ny = int(np.floor((y1 - y0) / dy)) + 1
    for j in range(ny):
        y = y0 + j * dy
        off = 0.5 * s if j % 2 else 0.0
        xs = np.arange(x0 + off, x1 + 1e-12, s)
        rows.append(np.column_stack([xs, np.full_like(xs, y)]))
    return np.vstack(rows)


def triangulate(
    loops: list[np.ndarray],
    h: float,
    *,
    min_angle: float = 26.0,
    max_rounds: int = 200,
) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate the region bounded by closed polygonal ``loops``.

    Parameters
    ----------
    loops : list of (k, 2) arrays
        Vertices of each boundary loop (first vertex not repeated).  The
        loop with the largest area is the outer boundary; others are holes.
    h : float
        Target edge length.  Segments longer than ``h`` are subdivided.
    min_angle : float
        Quality bound in degrees for the refinement.

    Returns
    -------
    nodes, triangles
        Coordinates and CCW connectivity.  Every input vertex appears in
        ``nodes`` with its original coordinates.
    """
    if h <= 0:
        raise ValueError("target size must be positive")
    loops = [np.asarray(lp, dtype=float) for lp in loops]
    areas = [_signed_area(lp) for lp in loops]
    outer = int(np.argmax(np.abs(areas)))
    fixed = []
    for i, lp in enumerate(loops):
        want_ccw = i == outer
        fixed.append(lp if (areas[i] > 0) == want_ccw else lp[::-1].copy())
    holes = [fixed[i] for i in range(len(fixed)) if i != outer]
    polygon = shapely.Polygon(fixed[outer], holes)
    if not polygon.is_valid:
        raise GeometryError(f"boundary is not a simple polygon: {shapely.is_valid_reason(polygon)}")
    # refine input so each segment is at most h long
    refined = []
    for lp in fixed:
        nxt = np.roll(lp, -1, axis=0)
        pieces = []
        for a, b in zip(lp, nxt):
            k = max(1, int(np.ceil(np.hypot(*(b - a)) / h - 1e-9)))
            t = np.arange(k)[:, None] / k
            pieces.append(a + t * (b - a))
        refined.append(np.vstack(pieces))
    g = _PSLG(refined, polygon)
    seg_len = np.hypot(*(g.points[g.segments[:, 1]] - g.points[g.segments[:, 0]]).T)
    h_min = max(0.2 * float(seg_len.min()), 1e-6 * h)

    # interior lattice, kept away from the boundary
    lat = _hex_lattice(polygon.bounds, h)
    inside = shapely.contains_xy(polygon, lat[:, 0], lat[:, 1])
    lat = lat[inside]
    if len(lat):
        a = g.points[g.segments[:, 0]]
        b = g.points[g.segments[:, 1]]
        far = _seg_point_dist2(lat, a, b) > (0.55 * h) ** 2
        g.add_points(lat[far])

    r_max = h / np.sqrt(3.0) * 1.35
    for _ in range(max_rounds):
        simplices = _recover(g)
        cent = g.points[simplices].mean(axis=1)
        simplices = simplices[shapely.contains_xy(g.polygon, cent[:, 0], cent[:, 1])]
        p = g.points[simplices]
        amin, emin = _angles(p)
        cc, rad = _circumcenters(p)
        bad = ((amin < min_angle) | (rad > r_max)) & (emin > h_min)
        if not np.any(bad):
            return _finish(g, simplices)
        idx = np.flatnonzero(bad)
        # worst first: small angles, then large size
        prio = np.lexsort((-rad[idx], amin[idx]))
        idx = idx[prio]
        accepted = _thin(cc[idx], rad[idx])
        idx = idx[accepted]
        _insert(g, cc[idx], p[idx].mean(axis=1), h_min)
    raise GeometryError("mesh refinement did not converge")


def _recover(g: _PSLG) -> np.ndarray:
    for _ in range(100):
        simplices = _delaunay(g.points)
        miss = _missing_segments(simplices, g.segments, len(g.points))
        if len(miss) == 0:
            return simplices
        g.split_segments(miss)
    raise GeometryError("boundary recovery failed")


def _thin(c: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Greedy selection of candidates that are not too close to each other."""
    tree = cKDTree(c)
    taken = np.zeros(len(c), dtype=bool)
    blocked = np.zeros(len(c), dtype=bool)
    for i in range(len(c)):
        if blocked[i]:
            continue
        taken[i] = True
        for j in tree.query_ball_point(c[i], 0.9 * r[i]):
            blocked[j] = True
    return np.flatnonzero(taken)


def _insert(g: _PSLG, cand: np.ndarray, origin: np.ndarray, h_min: float) -> None:
    a, b, mid, half, normal = g.seg_geometry()
    inside = shapely.contains_xy(g.polygon, cand[:, 0], cand[:, 1])
    to_split: list[int] = []
    free: list[int] = []
    for i, c in enumerate(cand):
        d = c - mid
        dist = np.hypot(d[:, 0], d[:, 1])
        enc = (dist < half) & (np.einsum("ij,ij->i", d, normal) <= 0.0)
        if not inside[i] and not np.any(enc):
            hit = _first_crossing(origin[i], c, a, b)
            enc = np.zeros(len(mid), dtype=bool)
            if hit is not None:
                enc[hit] = True
            else:
                enc[int(np.argmin(dist))] = True
        if np.any(enc):
            to_split.extend(np.flatnonzero(enc & (half > h_min)).tolist())
        else:
            free.append(i)
    if free:
        g.add_points(cand[free])
    if to_split:
        g.split_segments(np.array(to_split))


def _first_crossing(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray):
    r = q - p
    s = b - a
    den = r[0] * s[:, 1] - r[1] * s[:, 0]
    ap = a - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ap[:, 0] * s[:, 1] - ap[:, 1] * s[:, 0]) / den
        u = (ap[:, 0] * r[1] - ap[:, 1] * r[0]) / den
    ok = (np.abs(den) > 1e-300) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    if not np.any(ok):
        return None
    cand = np.flatnonzero(ok)
    return int(cand[np.argmin(t[cand])])


def _finish(g: _PSLG, simplices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    used = np.zeros(len(g.points), dtype=bool)
    used[simplices.ravel()] = True
    if not np.all(used[: g.n_boundary]):
        raise GeometryError("boundary vertex lost during triangulation")
    remap = np.cumsum(used) - 1
    nodes = g.points[used]
    tris = remap[simplices]
    p = nodes[tris]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (
        p[:, 2, 0] - p[:, 0, 0]
    )
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return nodes, tris
