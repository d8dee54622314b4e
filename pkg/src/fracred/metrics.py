"""Reduction-quality metrics: 3D gap, 3D step-off, and total gap area.

Pipeline per fracture-line pair (after an articular sphere has been fitted):

1. project both labeled lines radially onto the sphere, resampling along
   great circles so samples are at most ``arc_step`` apart and carrying the
   signed radial deviation of every sample;
2. 3D gap = symmetric geodesic Hausdorff distance between the projected
   lines; 3D step-off = maximum absolute radial deviation (default) or the
   differential variant across the gap;
3. unwrap the region between the lines into an azimuthal-equidistant chart
   about the gap's own centroid direction, close the boundary, triangulate
   it, interpolate the radial deviation over the interior with a thin-plate
   spline, and map back to 3D; the total gap area is the 3D patch area.

Open line pairs close into a simple polygon via the shorter end-to-end
connector pairing; closed pairs (full circumferential bands) form an
annulus, handled as an outer ring plus a hole. Everything is deterministic
and equivariant under rigid motions of the case: the chart axes are anchored
to the data, so a rigidly moved case reproduces identical chart coordinates
and therefore an identical triangulation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from shapely.geometry import Polygon

from .chart import TangentChart
from .errors import (
    ComputationError,
    MissingPairs,
    RegionTooLarge,
    SelfIntersectingBoundary,
)
from .geometry import Mesh, Sphere, geodesic_distance_matrix, project_to_sphere
from .rbf import ThinPlateSpline, rbf_fit
from .triangulate import (
    Triangulation2D,
    polygon_area,
    triangulate_annulus,
    triangulate_polygon,
)
from .validation import as_polyline

#: Default great-circle resampling step along projected lines, mm.
DEFAULT_ARC_STEP = 0.25

#: Default maximum triangle edge in the unwrapped chart, mm.
DEFAULT_TARGET_EDGE = 0.5

#: Boundary vertices closer than this are snapped together, mm.
SNAP_TOL = 1e-6

#: Chart coordinates are quantized to this lattice (mm) before the region is
#: triangulated. A rigidly moved case reproduces chart coordinates only to
#: ~1e-12 mm, which is enough to flip near-cocircular Delaunay diagonals and
#: perturb the patch area at the 1e-6 level; rounding to a lattice far above
#: the noise floor and far below every geometric tolerance makes the
#: triangulation inputs bit-identical instead.
CHART_QUANTUM = 1e-6

#: Metadata recorded in every report so results are auditable.
METRIC_CONVENTIONS = {
    "gap_definition": "symmetric geodesic Hausdorff between projected lines",
    "step_off_definition": "max absolute radial deviation (mode 'absolute')",
    "unwrap_chart": "azimuthal-equidistant about the gap centroid direction",
    "multi_pair_aggregation": "max for gap and step-off, sum for area",
    "radial_sign": "positive outside the fitted sphere",
}


@dataclass(frozen=True)
class FractureLinePair:
    """Two opposing labeled fracture lines bounding one gap."""

    line_a: np.ndarray
    line_b: np.ndarray
    fragment_a: str
    fragment_b: str
    pair_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "line_a", as_polyline(self.line_a, "line_a"))
        object.__setattr__(self, "line_b", as_polyline(self.line_b, "line_b"))
        if self.fragment_a == self.fragment_b:
            raise ValueError(
                f"pair {self.pair_id!r}: fragment ids must differ, both are"
                f" {self.fragment_a!r}"
            )

    def swapped(self) -> "FractureLinePair":
        return FractureLinePair(
            self.line_b, self.line_a, self.fragment_b, self.fragment_a, self.pair_id
        )


@dataclass(frozen=True)
class ProjectedLine:
    """On-sphere resampled fracture line with per-sample radial deviation."""

    points: np.ndarray
    deviations: np.ndarray

    def __post_init__(self):
        if self.points.shape[0] != self.deviations.shape[0]:
            raise ValueError("points and deviations must have equal length")

    @property
    def closed(self) -> bool:
        return bool(np.linalg.norm(self.points[0] - self.points[-1]) < 1e-9)


@dataclass(frozen=True)
class MetricParams:
    """Resolved discretization parameters, recorded in every report."""

    arc_step: float = DEFAULT_ARC_STEP
    target_edge: float = DEFAULT_TARGET_EDGE
    step_off_mode: str = "absolute"

    def __post_init__(self):
        if self.arc_step <= 0:
            raise ValueError("arc_step must be positive")
        if self.target_edge <= 0:
            raise ValueError("target_edge must be positive")
        if self.step_off_mode not in ("absolute", "differential"):
            raise ValueError(
                f"step_off_mode must be 'absolute' or 'differential',"
                f" got {self.step_off_mode!r}"
            )


def _slerp(u: np.ndarray, v: np.ndarray, angle: float, t: np.ndarray) -> np.ndarray:
    """Great-circle interpolation between unit vectors at parameters t."""
    if angle < 1e-12:
        out = np.outer(1.0 - t, u) + np.outer(t, v)
        return out / np.linalg.norm(out, axis=1)[:, None]
    s = math.sin(angle)
    return (np.outer(np.sin((1.0 - t) * angle), u) + np.outer(np.sin(t * angle), v)) / s


def project_line(s: Sphere, line, arc_step: float = DEFAULT_ARC_STEP) -> ProjectedLine:
    """Project a polyline onto the sphere and resample it along great circles.

    Consecutive output samples are at most ``arc_step`` apart (geodesically);
    radial deviations interpolate linearly in each segment's parameter.
    """
    if arc_step <= 0:
        raise ValueError("arc_step must be positive")
    pts = as_polyline(line, "line")
    proj, dev = project_to_sphere(s, pts)
    dirs = (proj - s.center) / s.radius
    out_pts = [proj[0]]
    out_dev = [dev[0]]
    for i in range(pts.shape[0] - 1):
        u, v = dirs[i], dirs[i + 1]
        angle = math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v))
        n_seg = max(1, math.ceil(s.radius * angle / arc_step))
        t = np.arange(1, n_seg + 1) / n_seg
        seg_dirs = _slerp(u, v, angle, t)
        out_pts.append(s.center + s.radius * seg_dirs)
        out_dev.append((1.0 - t) * dev[i] + t * dev[i + 1])
    return ProjectedLine(
        np.vstack([out_pts[0][None, :], *out_pts[1:]]),
        np.concatenate([[out_dev[0]], *out_dev[1:]]),
    )


def _hausdorff_geodesic(s: Sphere, a: np.ndarray, b: np.ndarray) -> float:
    # Row-chunked so huge lines cannot blow up the (na, nb, 3) cross product.
    chunk = max(1, int(2_000_000 // max(b.shape[0], 1)))
    min_ab = np.empty(a.shape[0])
    min_ba = np.full(b.shape[0], np.inf)
    for lo in range(0, a.shape[0], chunk):
        d = geodesic_distance_matrix(s, a[lo : lo + chunk], b)
        min_ab[lo : lo + chunk] = d.min(axis=1)
        np.minimum(min_ba, d.min(axis=0), out=min_ba)
    return float(max(min_ab.max(), min_ba.max()))


def gap_3d(s: Sphere, pair: FractureLinePair, arc_step: float = DEFAULT_ARC_STEP) -> float:
    """Maximum geodesic separation (symmetric Hausdorff) between the
    projected fracture lines, in mm."""
    pa = project_line(s, pair.line_a, arc_step)
    pb = project_line(s, pair.line_b, arc_step)
    return _hausdorff_geodesic(s, pa.points, pb.points)


def step_off_3d(
    s: Sphere,
    pair: FractureLinePair,
    arc_step: float = DEFAULT_ARC_STEP,
    mode: str = "absolute",
) -> float:
    """Maximum radial deviation of the fracture lines from the sphere, mm.

    ``absolute`` (default) is the literal definition: the largest |deviation|
    over both lines. ``differential`` measures the deviation mismatch across
    the gap (each sample against its geodesically nearest opposite sample),
    symmetrized over both directions so the pair order cannot matter.
    """
    pa = project_line(s, pair.line_a, arc_step)
    pb = project_line(s, pair.line_b, arc_step)
    if mode == "absolute":
        return float(max(np.abs(pa.deviations).max(), np.abs(pb.deviations).max()))
    if mode != "differential":
        raise ValueError(f"mode must be 'absolute' or 'differential', got {mode!r}")
    d = geodesic_distance_matrix(s, pa.points, pb.points)
    ab = np.abs(pa.deviations - pb.deviations[d.argmin(axis=1)]).max()
    ba = np.abs(pb.deviations - pa.deviations[d.argmin(axis=0)]).max()
    return float(max(ab, ba))


@dataclass(frozen=True)
class UnwrappedRegion:
    """Gap region unwrapped into the azimuthal-equidistant chart.

    ``boundary`` is a simple CCW polygon (mm in the chart plane) given
    without a repeated endpoint. Closed fracture-line pairs (full bands)
    produce an annulus: the inner ring is carried as ``hole``. Degenerate
    (zero-width) gaps are flagged rather than rejected so coincident lines
    report zero area instead of failing the case.
    """

    boundary: np.ndarray
    node_deviations: np.ndarray
    chart: TangentChart
    hole: np.ndarray | None = None
    hole_deviations: np.ndarray | None = None
    degenerate: bool = False

    @property
    def frame(self):
        """World-to-chart rotation (the unwrap rotation)."""
        return self.chart.frame

    @property
    def center_direction(self) -> np.ndarray:
        return self.chart.center_direction

    def all_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Boundary (and hole) nodes with their labeled deviations."""
        if self.hole is None:
            return self.boundary, self.node_deviations
        return (
            np.vstack([self.boundary, self.hole]),
            np.concatenate([self.node_deviations, self.hole_deviations]),
        )


def _quantize(uv: np.ndarray) -> np.ndarray:
    return np.round(uv / CHART_QUANTUM) * CHART_QUANTUM


def _snap_ring(ring: np.ndarray, devs: np.ndarray, tol: float = SNAP_TOL):
    """Drop consecutive (and wrap-around) vertices closer than ``tol``."""
    keep = [0]
    for i in range(1, ring.shape[0]):
        if np.linalg.norm(ring[i] - ring[keep[-1]]) > tol:
            keep.append(i)
    while len(keep) > 1 and np.linalg.norm(ring[keep[-1]] - ring[keep[0]]) <= tol:
        keep.pop()
    idx = np.asarray(keep)
    return ring[idx], devs[idx]


def _canonical_roll(ring: np.ndarray, devs: np.ndarray):
    """Start the ring at its lexicographically smallest vertex.

    Swapping line_a/line_b reverses the traversal; after CCW normalization
    and this roll, both orders yield the identical vertex sequence, so the
    triangulation (and every metric) is exactly pair-symmetric.
    """
    start = int(np.lexsort((ring[:, 1], ring[:, 0]))[0])
    return np.roll(ring, -start, axis=0), np.roll(devs, -start)


def _ensure_ccw(ring: np.ndarray, devs: np.ndarray):
    if polygon_area(ring) < 0:
        return ring[::-1].copy(), devs[::-1].copy()
    return ring, devs


def unwrap_region(
    s: Sphere, pair: FractureLinePair, arc_step: float = DEFAULT_ARC_STEP
) -> UnwrappedRegion:
    """Unwrap the gap between two projected fracture lines into 2D.

    Raises
    ------
    RegionTooLarge
        If the projected points do not fit a single spherical cap of
        angular radius < 90 degrees about their centroid direction.
    SelfIntersectingBoundary
        If the closed boundary cannot be made a simple polygon, or if
        exactly one of the two lines is closed.
    """
    pa = project_line(s, pair.line_a, arc_step)
    pb = project_line(s, pair.line_b, arc_step)
    dirs_a = (pa.points - s.center) / s.radius
    dirs_b = (pb.points - s.center) / s.radius
    all_dirs = np.vstack([dirs_a, dirs_b])

    mean = all_dirs.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-9:
        raise RegionTooLarge("projected lines wrap the sphere; no centroid direction")
    n = mean / norm
    # Anchor the chart's in-plane axes to the angle-weighted mean of the
    # tangential components: a set-based quantity, so it is equivariant under
    # rigid motion and exactly invariant under swapping the two lines (a
    # per-point argmax would tie on mirror-symmetric regions and flip the
    # chart). Balanced regions (e.g. full circumferential bands) zero the
    # mean; fall back to the first line point, which their own symmetry
    # makes safe.
    dots = all_dirs @ n
    tang = all_dirs - np.outer(dots, n)
    weights = 1.0 - dots
    m = (weights[:, None] * tang).sum(axis=0)
    scale = float((weights * np.linalg.norm(tang, axis=1)).sum())
    if scale > 0 and np.linalg.norm(m) >= 1e-3 * scale:
        anchor = m
    else:
        anchor = dirs_a[0]
    chart = TangentChart.fit(all_dirs, s.radius, anchor=anchor)
    max_angle = chart.max_angle(all_dirs)
    if max_angle >= math.pi / 2:
        raise RegionTooLarge(
            f"projected region spans {math.degrees(max_angle):.1f} deg from its"
            " centroid; the single-cap unwrap needs < 90 deg"
        )

    if pa.closed != pb.closed:
        raise SelfIntersectingBoundary(
            "exactly one fracture line of the pair is closed; the gap region"
            " is not a simple polygon or an annulus"
        )

    if pa.closed:
        return _unwrap_closed(
            chart, chart.forward(dirs_a), pa.deviations, chart.forward(dirs_b),
            pb.deviations,
        )
    return _unwrap_open(
        chart, dirs_a, pa.deviations, dirs_b, pb.deviations, arc_step
    )


def _unwrap_closed(chart, uv_a, dev_a, uv_b, dev_b) -> UnwrappedRegion:
    ring_a, dev_a = _snap_ring(_quantize(uv_a[:-1]), dev_a[:-1])
    ring_b, dev_b = _snap_ring(_quantize(uv_b[:-1]), dev_b[:-1])
    if ring_a.shape[0] < 3 or ring_b.shape[0] < 3:
        raise SelfIntersectingBoundary("a closed fracture line collapsed when snapped")
    ring_a, dev_a = _ensure_ccw(ring_a, dev_a)
    ring_b, dev_b = _ensure_ccw(ring_b, dev_b)
    if abs(polygon_area(ring_a)) >= abs(polygon_area(ring_b)):
        outer, outer_dev, inner, inner_dev = ring_a, dev_a, ring_b, dev_b
    else:
        outer, outer_dev, inner, inner_dev = ring_b, dev_b, ring_a, dev_a
    shell = Polygon(outer, holes=[inner])
    if not shell.is_valid:
        raise SelfIntersectingBoundary(
            "closed fracture lines cross or are not nested; cannot form the"
            " annular gap region"
        )
    return UnwrappedRegion(
        boundary=outer,
        node_deviations=outer_dev,
        chart=chart,
        hole=inner,
        hole_deviations=inner_dev,
    )


def _connector(dir_from, dev_from, dir_to, dev_to, arc_step, radius):
    """Interior samples of the geodesic joining two boundary endpoints.

    The connector follows the great circle (the shortest on-surface path)
    rather than a chart chord, so a gap whose ends sit on one meridian is
    closed by exactly that meridian.
    """
    angle = math.atan2(
        np.linalg.norm(np.cross(dir_from, dir_to)), float(dir_from @ dir_to)
    )
    n_seg = max(1, math.ceil(radius * angle / arc_step))
    if n_seg == 1:
        return np.zeros((0, 3)), np.zeros(0)
    t = np.arange(1, n_seg) / n_seg
    return _slerp(dir_from, dir_to, angle, t), (1.0 - t) * dev_from + t * dev_to


def _unwrap_open(chart, dirs_a, dev_a, dirs_b, dev_b, arc_step) -> UnwrappedRegion:
    uv_a = chart.forward(dirs_a)
    uv_b = chart.forward(dirs_b)
    # Close via the shorter endpoint pairing; ties keep line B's input order.
    d_rev = np.linalg.norm(uv_a[-1] - uv_b[-1]) + np.linalg.norm(uv_b[0] - uv_a[0])
    d_fwd = np.linalg.norm(uv_a[-1] - uv_b[0]) + np.linalg.norm(uv_b[-1] - uv_a[0])
    if d_rev < d_fwd - 1e-12:
        uv_b, dev_b, dirs_b = uv_b[::-1], dev_b[::-1], dirs_b[::-1]
    conn1_dirs, conn1_dev = _connector(
        dirs_a[-1], dev_a[-1], dirs_b[0], dev_b[0], arc_step, chart.radius
    )
    conn2_dirs, conn2_dev = _connector(
        dirs_b[-1], dev_b[-1], dirs_a[0], dev_a[0], arc_step, chart.radius
    )
    ring = _quantize(
        np.vstack([uv_a, chart.forward(conn1_dirs), uv_b, chart.forward(conn2_dirs)])
    )
    devs = np.concatenate([dev_a, conn1_dev, dev_b, conn2_dev])
    ring, devs = _snap_ring(ring, devs)

    extent = float(np.ptp(ring, axis=0).max()) if ring.shape[0] else 0.0
    area = polygon_area(ring) if ring.shape[0] >= 3 else 0.0
    if ring.shape[0] < 3 or abs(area) <= max(1e-9, 1e-6 * extent * extent):
        # Zero-width gap (coincident lines): report zero area, not an error.
        return UnwrappedRegion(
            boundary=ring, node_deviations=devs, chart=chart, degenerate=True
        )
    ring, devs = _ensure_ccw(ring, devs)
    if not Polygon(ring).is_valid:
        raise SelfIntersectingBoundary(
            "gap boundary self-intersects after snapping; check the fracture"
            " line labeling"
        )
    ring, devs = _canonical_roll(ring, devs)
    return UnwrappedRegion(boundary=ring, node_deviations=devs, chart=chart)


def triangulate_region(
    region: UnwrappedRegion, target_edge: float = DEFAULT_TARGET_EDGE
) -> Triangulation2D:
    """Triangulate the region interior; no edge exceeds ``target_edge``."""
    if region.degenerate:
        verts = region.boundary if region.boundary.shape[0] else np.zeros((0, 2))
        return Triangulation2D(verts, np.zeros((0, 3), dtype=np.int64), verts.shape[0])
    if region.hole is None:
        return triangulate_polygon(region.boundary, target_edge)
    return triangulate_annulus(region.boundary, region.hole, target_edge)


@dataclass(frozen=True)
class GapPatch:
    """Reconstructed 3D surface spanning one fracture gap."""

    mesh: Mesh
    area: float
    vertex_deviations: np.ndarray
    regularized: bool = False


def reproject_patch(
    s: Sphere,
    tri: Triangulation2D,
    model: ThinPlateSpline,
    region: UnwrappedRegion,
) -> GapPatch:
    """Lift the 2D triangulation back to 3D through the deviation model."""
    if tri.triangles.shape[0] == 0:
        return GapPatch(
            Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)),
            0.0,
            np.zeros(0),
            regularized=getattr(model, "regularized_", False),
        )
    radial = model.predict(tri.vertices)
    dirs = region.chart.inverse(tri.vertices)
    pts = s.center + (s.radius + radial)[:, None] * dirs
    mesh = Mesh(pts, tri.triangles)
    return GapPatch(mesh, mesh.area(), radial, regularized=bool(model.regularized_))


def gap_patch(
    s: Sphere, pair: FractureLinePair, params: MetricParams | None = None
) -> GapPatch:
    """Full per-pair area pipeline: unwrap, triangulate, interpolate, lift."""
    p = params or MetricParams()
    region = unwrap_region(s, pair, p.arc_step)
    tri = triangulate_region(region, p.target_edge)
    if region.degenerate:
        return reproject_patch(s, tri, ThinPlateSpline(), region)
    nodes, values = region.all_nodes()
    model = rbf_fit(nodes, values)
    return reproject_patch(s, tri, model, region)


@dataclass(frozen=True)
class PairMetrics:
    """Per-pair metric row of a reduction report."""

    pair_id: str
    fragment_a: str
    fragment_b: str
    gap_3d: float = float("nan")
    step_off_3d: float = float("nan")
    gap_area: float = float("nan")
    warnings: tuple[str, ...] = ()
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class ReductionReport:
    """Case-level reduction metrics with per-pair breakdown."""

    sphere: Sphere
    per_pair: tuple[PairMetrics, ...]
    total_gap_area: float
    gap_3d: float
    step_off_3d: float
    params: MetricParams
    complete: bool
    warnings: tuple[str, ...] = ()


def _aggregate(sphere, rows, params, extra_warnings=()) -> ReductionReport:
    ok = [r for r in rows if not r.failed]
    warn = list(extra_warnings)
    for r in rows:
        if r.failed:
            warn.append(f"pair {r.pair_id!r} failed: {r.error}")
    return ReductionReport(
        sphere=sphere,
        per_pair=tuple(rows),
        total_gap_area=float(sum(r.gap_area for r in ok)) if ok else float("nan"),
        gap_3d=max((r.gap_3d for r in ok), default=float("nan")),
        step_off_3d=max((r.step_off_3d for r in ok), default=float("nan")),
        params=params,
        complete=not any(r.failed for r in rows),
        warnings=tuple(warn),
    )


def _pair_metrics(s: Sphere, pair: FractureLinePair, params: MetricParams) -> PairMetrics:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pa = project_line(s, pair.line_a, params.arc_step)
        pb = project_line(s, pair.line_b, params.arc_step)
        gap = _hausdorff_geodesic(s, pa.points, pb.points)
        if params.step_off_mode == "absolute":
            step = float(max(np.abs(pa.deviations).max(), np.abs(pb.deviations).max()))
        else:
            d = geodesic_distance_matrix(s, pa.points, pb.points)
            step = float(
                max(
                    np.abs(pa.deviations - pb.deviations[d.argmin(axis=1)]).max(),
                    np.abs(pb.deviations - pa.deviations[d.argmin(axis=0)]).max(),
                )
            )
        patch = gap_patch(s, pair, params)
    notes = tuple(str(w.message) for w in caught)
    if patch.regularized:
        notes = notes + ("deviation interpolation used the ridge fallback",)
    return PairMetrics(
        pair_id=pair.pair_id,
        fragment_a=pair.fragment_a,
        fragment_b=pair.fragment_b,
        gap_3d=gap,
        step_off_3d=step,
        gap_area=patch.area,
        warnings=notes,
    )


def total_gap_area(
    s: Sphere,
    pairs,
    params: MetricParams | None = None,
) -> ReductionReport:
    """Run the full metric pipeline over the fracture-line pairs of a case.

    A failing pair is flagged in its row and excluded from the aggregates;
    the report's ``complete`` flag records that degradation, so a partial
    report is never silently complete.
    """
    pairs = list(pairs)
    if not pairs:
        raise MissingPairs("case defines no fracture line pairs")
    p = params or MetricParams()
    rows = []
    for pair in pairs:
        try:
            rows.append(_pair_metrics(s, pair, p))
        except ComputationError as exc:
            rows.append(
                PairMetrics(
                    pair_id=pair.pair_id,
                    fragment_a=pair.fragment_a,
                    fragment_b=pair.fragment_b,
                    error=str(exc),
                )
            )
    return _aggregate(s, rows, p)


def case_metrics(case, params: MetricParams | None = None) -> ReductionReport:
    """Fit the articular sphere of a case and compute all three metrics.

    ``case`` is any object exposing ``landmark_points()`` -> (n, 3) array,
    ``line_pairs()`` -> list of FractureLinePair, and ``metric_params()``
    -> MetricParams (the loader's FractureCase and synthbench's
    SyntheticCase both do).
    """
    from .spherefit import fit_sphere

    p = params or case.metric_params()
    pairs = case.line_pairs()
    if not pairs:
        raise MissingPairs("case defines no fracture line pairs")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sphere = fit_sphere(case.landmark_points())
    fit_warnings = tuple(f"sphere fit: {w.message}" for w in caught)
    report = total_gap_area(sphere, pairs, p)
    if fit_warnings:
        report = replace(report, warnings=report.warnings + fit_warnings)
    return report
