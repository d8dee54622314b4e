"""2D triangulation of unwrapped gap regions.

Two entry shapes, both produced by the unwrap step:

* a simple CCW polygon (open fracture-line pairs) -- Delaunay over the
  boundary plus an interior hexagonal point grid, verified to tile the
  polygon exactly, with ear clipping as the fallback when verification
  fails on a pathological shape;
* a pair of nested CCW rings (closed fracture-line pairs, e.g. a full
  circumferential band) -- a greedy "zip" between the rings.

Sliver triangles matter here: a 2D sliver has no area, but lifted onto the
curved articular surface it pleats and inflates the 3D patch area, which is
why the polygon path insists on interior Steiner points instead of
triangulating from the boundary alone.

Initial triangulations partition the region exactly (this is checked); a
conforming midpoint-split refinement then caps every edge at the target
length without hanging nodes, since each edge split decision is global and
neighbors always agree. Tie-breaks use small absolute tolerances so the
combinatorics are stable under the ~1e-12 coordinate noise of a rigidly
moved case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.spatial import Delaunay
from shapely.geometry import Polygon

from .errors import SelfIntersectingBoundary

_TIE_TOL = 1e-9
_MAX_REFINE_ROUNDS = 64


def polygon_area(ring: np.ndarray) -> float:
    """Signed shoelace area of a ring given without a repeated endpoint."""
    x = ring[:, 0]
    y = ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True)
class Triangulation2D:
    """Triangulation of a planar region; boundary vertices come first."""

    vertices: np.ndarray
    triangles: np.ndarray
    n_boundary: int

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        e1 = v[t[:, 1]] - v[t[:, 0]]
        e2 = v[t[:, 2]] - v[t[:, 0]]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def total_area(self) -> float:
        return float(self.triangle_areas().sum())

    def edge_lengths(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        out = np.empty((t.shape[0], 3))
        for k in range(3):
            out[:, k] = np.linalg.norm(v[t[:, (k + 1) % 3]] - v[t[:, k]], axis=1)
        return out


def _point_in_triangle_mask(pts: np.ndarray, a, b, c, eps: float) -> np.ndarray:
    """Inside-or-on-edge test for a CCW triangle, vectorized over pts."""
    s1 = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
    s2 = (c[0] - b[0]) * (pts[:, 1] - b[1]) - (c[1] - b[1]) * (pts[:, 0] - b[0])
    s3 = (a[0] - c[0]) * (pts[:, 1] - c[1]) - (a[1] - c[1]) * (pts[:, 0] - c[0])
    return (s1 >= -eps) & (s2 >= -eps) & (s3 >= -eps)


def ear_clip(ring: np.ndarray) -> np.ndarray:
    """Triangulate a simple CCW polygon by ear clipping.

    Returns (n-2, 3) vertex-index triangles. Degenerate (collinear) ears are
    emitted rather than dropped so every boundary vertex stays in the mesh.
    """
    n = ring.shape[0]
    if n < 3:
        raise SelfIntersectingBoundary("polygon needs at least 3 vertices")
    if polygon_area(ring) <= 0:
        raise SelfIntersectingBoundary("ear clipping expects a CCW polygon")
    scale = float(np.abs(ring - ring.mean(axis=0)).max())
    eps = 1e-12 * max(scale * scale, 1.0)

    nxt = np.roll(np.arange(n), -1)
    prv = np.roll(np.arange(n), 1)
    active = np.ones(n, dtype=bool)
    tris: list[tuple[int, int, int]] = []
    remaining = n
    idx = 0
    stall = 0
    # Two passes per stall: first require strictly positive ears, then allow
    # degenerate (collinear) ears to flush straight runs.
    allow_degenerate = False
    while remaining > 3:
        if not active[idx]:
            idx = int(nxt[idx])
            continue
        i_prev, i_next = int(prv[idx]), int(nxt[idx])
        a, b, c = ring[i_prev], ring[idx], ring[i_next]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        is_convex = cross > eps or (allow_degenerate and cross > -eps)
        clipped = False
        if is_convex:
            others = active.copy()
            others[[i_prev, idx, i_next]] = False
            cand = np.flatnonzero(others)
            if cand.size == 0 or not np.any(
                _point_in_triangle_mask(ring[cand], a, b, c, eps)
            ):
                tris.append((i_prev, idx, i_next))
                active[idx] = False
                nxt[i_prev] = i_next
                prv[i_next] = i_prev
                remaining -= 1
                stall = 0
                allow_degenerate = False
                idx = i_prev
                clipped = True
        if not clipped:
            idx = i_next
            stall += 1
            if stall > remaining:
                if not allow_degenerate:
                    allow_degenerate = True
                    stall = 0
                else:
                    raise SelfIntersectingBoundary(
                        "no ear found; boundary is self-intersecting or degenerate"
                    )
    last = np.flatnonzero(active)
    # Close with the final triangle in linked-list order.
    first = int(last[0])
    tris.append((first, int(nxt[first]), int(nxt[nxt[first]])))
    return np.asarray(tris, dtype=np.int64)


def zip_rings(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Triangulate the annular region between two nested CCW rings.

    Vertex indices in the result address the concatenation [outer, inner].
    Greedy shortest-diagonal marching; correct for the near-parallel ring
    pairs the unwrap produces.
    """
    n_o, n_i = outer.shape[0], inner.shape[0]
    if n_o < 3 or n_i < 3:
        raise SelfIntersectingBoundary("each ring needs at least 3 vertices")
    d = np.linalg.norm(outer[:, None, :] - inner[None, :, :], axis=2)
    i0, j0 = np.unravel_index(int(np.argmin(d)), d.shape)

    tris: list[tuple[int, int, int]] = []
    i = j = 0
    while i < n_o or j < n_i:
        oi = (i0 + i) % n_o
        ij = n_o + (j0 + j) % n_i
        can_outer = i < n_o
        can_inner = j < n_i
        if can_outer and can_inner:
            o_next = outer[(i0 + i + 1) % n_o]
            i_next = inner[(j0 + j + 1) % n_i]
            d_outer = float(np.linalg.norm(o_next - inner[(j0 + j) % n_i]))
            d_inner = float(np.linalg.norm(outer[(i0 + i) % n_o] - i_next))
            advance_outer = d_outer <= d_inner + _TIE_TOL
        else:
            advance_outer = can_outer
        if advance_outer:
            tris.append((oi, (i0 + i + 1) % n_o, ij))
            i += 1
        else:
            tris.append((oi, n_o + (j0 + j + 1) % n_i, ij))
            j += 1
    return np.asarray(tris, dtype=np.int64)


def refine_to_edge_length(
    vertices: np.ndarray, triangles: np.ndarray, target_edge: float
) -> tuple[np.ndarray, np.ndarray]:
    """Split edges at midpoints until no edge exceeds ``target_edge``.

    The split decision is made once per (global) edge and neighbors share
    the cached midpoint vertex, so the refinement stays conforming; the
    union of triangles is unchanged, only subdivided. Per 1/2/3-split case
    the retriangulation is fixed, keeping the result fully deterministic.
    """
    if target_edge <= 0:
        raise ValueError("target_edge must be positive")
    verts = np.asarray(vertices, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if tris.shape[0] == 0:
        return verts, tris
    limit = target_edge * (1.0 + 1e-12)
    for _ in range(_MAX_REFINE_ROUNDS):
        # Edge k of a triangle runs from corner k to corner (k+1) % 3.
        edges = np.stack(
            [tris[:, (0, 1)], tris[:, (1, 2)], tris[:, (2, 0)]], axis=1
        )
        uniq, inv = np.unique(np.sort(edges, axis=2).reshape(-1, 2), axis=0,
                              return_inverse=True)
        lengths = np.linalg.norm(verts[uniq[:, 0]] - verts[uniq[:, 1]], axis=1)
        needs = lengths > limit
        if not needs.any():
            break
        mid_ids = np.full(uniq.shape[0], -1, dtype=np.int64)
        mid_ids[needs] = verts.shape[0] + np.arange(int(needs.sum()))
        verts = np.vstack(
            [verts, 0.5 * (verts[uniq[needs, 0]] + verts[uniq[needs, 1]])]
        )
        tri_mid = mid_ids[inv].reshape(-1, 3)
        pattern = (
            (tri_mid[:, 0] >= 0) * 1
            + (tri_mid[:, 1] >= 0) * 2
            + (tri_mid[:, 2] >= 0) * 4
        )
        out: list[np.ndarray] = [tris[pattern == 0]]

        def emit(*cols):
            out.append(np.stack(cols, axis=1))

        sel = pattern == 7
        if sel.any():
            a, b, c = tris[sel].T
            m01, m12, m20 = tri_mid[sel].T
            emit(a, m01, m20)
            emit(m01, b, m12)
            emit(m20, m12, c)
            emit(m01, m12, m20)
        # Cyclic rotation of the corners rotates the edges identically, so
        # one canonical layout per split count covers all orientations.
        for pat, rot in ((1, (0, 1, 2)), (2, (1, 2, 0)), (4, (2, 0, 1))):
            sel = pattern == pat
            if sel.any():
                v0, v1, v2 = tris[sel][:, rot].T
                m01 = tri_mid[sel][:, rot][:, 0]
                emit(v0, m01, v2)
                emit(m01, v1, v2)
        for pat, rot in ((3, (0, 1, 2)), (6, (1, 2, 0)), (5, (2, 0, 1))):
            sel = pattern == pat
            if sel.any():
                v0, v1, v2 = tris[sel][:, rot].T
                m = tri_mid[sel][:, rot]
                m01, m12 = m[:, 0], m[:, 1]
                emit(m01, v1, m12)
                emit(v0, m01, m12)
                emit(v0, m12, v2)
        tris = np.vstack([block for block in out if block.size])
    else:
        raise RuntimeError("edge refinement failed to converge in 64 rounds")
    return verts, tris


def _hex_grid(bounds, spacing: float) -> np.ndarray:
    """Hexagonal point lattice over a bounding box.

    Anchored to the (data-derived) box corner, so it co-moves with a
    rigidly transformed case; hexagonal rather than square because square
    lattices are cocircular and make the Delaunay diagonals noise-unstable.
    """
    minx, miny, maxx, maxy = bounds
    row_h = spacing * math.sqrt(3.0) / 2.0
    ys = np.arange(miny + 0.5 * row_h, maxy, row_h)
    points = []
    for row, y in enumerate(ys):
        x0 = minx + (0.25 if row % 2 else 0.75) * spacing
        xs = np.arange(x0, maxx, spacing)
        if xs.size:
            points.append(np.stack([xs, np.full(xs.size, y)], axis=1))
    if not points:
        return np.zeros((0, 2))
    return np.vstack(points)


def _delaunay_region(
    rings: list[np.ndarray], target_edge: float
) -> tuple[np.ndarray, np.ndarray] | None:
    """Quality triangulation of a ringed region; None if unverifiable.

    ``rings[0]`` is the CCW shell, the rest are CCW holes. Delaunay over
    ring vertices plus an interior hex-grid, filtered to triangles whose
    centroid lies inside the region. Verified afterwards: every ring
    segment must appear as an edge and the kept triangles must sum exactly
    to the region area; any miss returns None and the caller falls back.
    """
    poly = Polygon(rings[0], holes=rings[1:])
    spacing = 0.7 * target_edge
    seg_max = max(
        float(np.linalg.norm(np.roll(r, -1, axis=0) - r, axis=1).max()) for r in rings
    )
    margin = 0.55 * max(spacing, seg_max)
    grid = _hex_grid(poly.bounds, spacing)
    if grid.shape[0]:
        shrunk = poly.buffer(-margin)
        if not shrunk.is_empty:
            keep = shapely.contains_xy(shrunk, grid[:, 0], grid[:, 1])
            grid = grid[keep]
        else:
            grid = np.zeros((0, 2))
    ring_pts = np.vstack(rings)
    points = np.vstack([ring_pts, grid]) if grid.shape[0] else ring_pts
    try:
        tri = Delaunay(points)
    except Exception:
        return None
    simplices = tri.simplices.astype(np.int64)
    flip = _signed_areas(points, simplices) < 0
    simplices[flip] = simplices[flip][:, ::-1]
    cent = points[simplices].mean(axis=1)
    inside = shapely.contains_xy(poly, cent[:, 0], cent[:, 1])
    kept = simplices[inside]
    if kept.shape[0] == 0:
        return None
    edges = set()
    for k in range(3):
        pairs = np.sort(np.stack([kept[:, k], kept[:, (k + 1) % 3]], axis=1), axis=1)
        edges.update(map(tuple, pairs.tolist()))
    offset = 0
    for ring in rings:
        n = ring.shape[0]
        for i in range(n):
            a, b = offset + i, offset + (i + 1) % n
            if (min(a, b), max(a, b)) not in edges:
                return None
        offset += n
    total = float(_signed_areas(points, kept).sum())
    expected = polygon_area(rings[0]) - sum(polygon_area(r) for r in rings[1:])
    if abs(total - expected) > 1e-9 * max(abs(expected), 1.0):
        return None
    return points, kept


def triangulate_polygon(ring: np.ndarray, target_edge: float) -> Triangulation2D:
    """Triangulate a simple CCW polygon and refine to the target edge length."""
    result = _delaunay_region([ring], target_edge)
    if result is not None:
        points, base = result
    else:
        points, base = ring, ear_clip(ring)
    verts, tris = refine_to_edge_length(points, base, target_edge)
    out = Triangulation2D(verts, tris, n_boundary=ring.shape[0])
    _check_partition(out, polygon_area(ring))
    return out


def triangulate_annulus(
    outer: np.ndarray, inner: np.ndarray, target_edge: float
) -> Triangulation2D:
    """Triangulate the region between nested CCW rings, then refine."""
    result = _delaunay_region([outer, inner], target_edge)
    if result is not None:
        points, base = result
    else:
        base = zip_rings(outer, inner)
        points = np.vstack([outer, inner])
        if np.any(_signed_areas(points, base) < -_TIE_TOL):
            raise SelfIntersectingBoundary(
                "ring zip produced inverted triangles; fracture lines likely cross"
            )
    verts, tris = refine_to_edge_length(points, base, target_edge)
    out = Triangulation2D(verts, tris, n_boundary=outer.shape[0] + inner.shape[0])
    _check_partition(out, polygon_area(outer) - polygon_area(inner))
    return out


def _signed_areas(verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    e1 = verts[tris[:, 1]] - verts[tris[:, 0]]
    e2 = verts[tris[:, 2]] - verts[tris[:, 0]]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _check_partition(tri: Triangulation2D, expected_area: float) -> None:
    got = tri.total_area()
    if abs(got - expected_area) > 1e-9 * max(abs(expected_area), 1.0):
        raise SelfIntersectingBoundary(
            f"triangulation area {got:.12g} does not match region area"
            f" {expected_area:.12g}; boundary is not simple"
        )
