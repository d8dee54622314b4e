"""Deterministic synthetic fracture cases with closed-form ground truth.

Spherical-zone geometry is the one family where all three reduction metrics
have closed forms: two cap/band fragments facing each other across a pair of
parallels carry a gap of exactly R * (colat_b - colat_a), a step-off of
max(|dev_a|, |dev_b|) for constant radial deviations, and a gap area equal
to the spherical-zone formula. Irregular variants (sinusoidal colatitude
wobble on the fracture lines) are also generated for convergence and
invariance testing, but carry no closed-form gap/area truth.

Everything regenerates bitwise-identically from (parameters, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import Mesh, RigidTransform
from .metrics import FractureLinePair, MetricParams


def analytic_zone_area(
    radius: float, colat_a: float, colat_b: float, arc_span: float = 360.0
) -> float:
    """Area (mm^2) of the spherical zone between two colatitudes, degrees."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not 0.0 <= colat_a <= colat_b <= 180.0:
        raise ValueError("need 0 <= colat_a <= colat_b <= 180 degrees")
    if not 0.0 < arc_span <= 360.0:
        raise ValueError("arc_span must be in (0, 360] degrees")
    ca = math.cos(math.radians(colat_a))
    cb = math.cos(math.radians(colat_b))
    return (arc_span / 360.0) * 2.0 * math.pi * radius * radius * (ca - cb)


@dataclass(frozen=True)
class GroundTruth:
    """Closed-form targets; None marks a quantity with no analytic value."""

    gap_3d: float | None
    step_off_3d: float | None
    total_gap_area: float | None
    transforms: tuple[RigidTransform, ...]


@dataclass(frozen=True)
class SyntheticCase:
    """Complete synthetic case: fragments, landmarks, lines, ground truth."""

    case_id: str
    fragment_ids: tuple[str, ...]
    fragments: tuple[Mesh, ...]
    landmarks: tuple[np.ndarray, ...]
    pairs: tuple[FractureLinePair, ...]
    ground_truth: GroundTruth
    seed: int
    radius: float

    def landmark_points(self) -> np.ndarray:
        return np.vstack(self.landmarks)

    def line_pairs(self) -> list[FractureLinePair]:
        return list(self.pairs)

    def metric_params(self) -> MetricParams:
        return MetricParams()

    def fragment(self, fragment_id: str) -> Mesh:
        return self.fragments[self.fragment_ids.index(fragment_id)]


def _sphere_points(radius, colat_deg, phi_deg):
    theta = np.radians(np.asarray(colat_deg, dtype=np.float64))
    phi = np.radians(np.asarray(phi_deg, dtype=np.float64))
    st, ct = np.sin(theta), np.cos(theta)
    return radius * np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)


def _patch_mesh(
    radius: float,
    colat_lo: float,
    colat_hi: float,
    arc_span: float,
    n_theta: int,
    n_phi: int,
    texture_mm: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Mesh:
    """Lat-long grid mesh of a spherical patch; welded seam at 360 deg.

    ``texture_mm`` adds a smooth deterministic radial bump field. Perfectly
    smooth spherical patches slide along themselves under ICP (the point-to-
    surface objective is flat along rotations about the sphere center), which
    real bone fragments do not; the texture restores that pose lock without
    touching the fracture lines or landmarks the metric oracles use.
    """
    closed = arc_span >= 360.0
    thetas = np.linspace(colat_lo, colat_hi, n_theta)
    phis = np.linspace(0.0, arc_span, n_phi, endpoint=not closed)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    tt = np.radians(tt.ravel())
    pp = np.radians(pp.ravel())
    r = np.full(tt.shape, float(radius))
    if texture_mm > 0.0 and rng is not None:
        for _ in range(4):
            p, q = rng.integers(2, 7, size=2)
            phase_t, phase_p = rng.uniform(0.0, 2.0 * math.pi, size=2)
            amp = texture_mm * rng.uniform(0.3, 1.0) / 4.0
            r = r + amp * np.sin(p * tt + phase_t) * np.cos(q * pp + phase_p)
    st, ct = np.sin(tt), np.cos(tt)
    verts = np.stack([r * st * np.cos(pp), r * st * np.sin(pp), r * ct], axis=-1)
    faces = []
    n_cols = n_phi
    for i in range(n_theta - 1):
        for j in range(n_cols if closed else n_cols - 1):
            j1 = (j + 1) % n_cols
            a = i * n_cols + j
            b = (i + 1) * n_cols + j
            c = (i + 1) * n_cols + j1
            d = i * n_cols + j1
            faces.append((a, b, c))
            faces.append((a, c, d))
    return Mesh(verts, np.asarray(faces, dtype=np.int64))


def _fracture_line(
    radius: float,
    colat_deg: float,
    arc_span: float,
    n_points: int,
    deviation: float,
    wobble_deg: float,
    rng: np.random.Generator,
) -> np.ndarray:
    closed = arc_span >= 360.0
    if closed:
        phi = np.linspace(0.0, 360.0, n_points, endpoint=False)
    else:
        phi = np.linspace(0.0, arc_span, n_points)
    colat = np.full(n_points, float(colat_deg))
    if wobble_deg > 0.0:
        harmonics = rng.integers(2, 6, size=2)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=2)
        amps = wobble_deg * rng.uniform(0.4, 1.0, size=2)
        for k, ph, amp in zip(harmonics, phases, amps):
            colat = colat + amp * np.sin(np.radians(k * phi * (360.0 / max(arc_span, 1e-9))) + ph)
    pts = _sphere_points(radius + deviation, colat, phi)
    if closed:
        pts = np.vstack([pts, pts[0]])
    return pts


def _landmark_grid(radius, colat_lo, colat_hi, arc_span, n_theta=4, n_phi=8):
    thetas = np.linspace(colat_lo, colat_hi, n_theta + 2)[1:-1]
    phis = np.linspace(0.0, arc_span, n_phi, endpoint=arc_span < 360.0)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    return _sphere_points(radius, tt.ravel(), pp.ravel())


def make_band_case(
    radius: float = 10.0,
    colat_a: float = 40.0,
    colat_b: float = 60.0,
    arc_span: float = 360.0,
    n_line_points: int = 360,
    deviation_a: float = 0.0,
    deviation_b: float = 0.0,
    seed: int = 0,
    line_wobble_deg: float = 0.0,
    n_theta: int = 12,
    surface_texture_mm: float = 0.3,
    cap_extent_deg: float = 25.0,
    case_id: str | None = None,
) -> SyntheticCase:
    """Two cap fragments facing each other across the colat_a/colat_b band.

    Fracture lines sit at radii R+deviation_a and R+deviation_b above the
    two parallels. Ground truth (zero wobble): gap = R * d_colat in radians,
    step-off = max(|dev_a|, |dev_b|), area = the spherical-zone formula
    (available when the two deviations are equal, at radius R+dev).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not 0.0 < colat_a < colat_b < 90.0:
        raise ValueError(
            "need 0 < colat_a < colat_b < 90 degrees (single-cap unwrap rule)"
        )
    if not 0.0 < arc_span <= 360.0:
        raise ValueError("arc_span must be in (0, 360] degrees")
    if n_line_points < 8:
        raise ValueError("n_line_points must be at least 8")
    rng = np.random.default_rng(seed)
    n_phi = max(16, int(round(120 * arc_span / 360.0)))
    lo_a = max(3.0, colat_a - 25.0)
    hi_b = min(88.0, colat_b + 25.0)
    frag_a = _patch_mesh(
        radius, lo_a, colat_a, arc_span, n_theta, n_phi, surface_texture_mm, rng
    )
    frag_b = _patch_mesh(
        radius, colat_b, hi_b, arc_span, n_theta, n_phi, surface_texture_mm, rng
    )
    line_a = _fracture_line(
        radius, colat_a, arc_span, n_line_points, deviation_a, line_wobble_deg, rng
    )
    line_b = _fracture_line(
        radius, colat_b, arc_span, n_line_points, deviation_b, line_wobble_deg, rng
    )
    pair = FractureLinePair(line_a, line_b, "frag-a", "frag-b", pair_id="band")
    landmarks_a = _landmark_grid(radius, lo_a, colat_a, arc_span)
    landmarks_b = _landmark_grid(radius, colat_b, hi_b, arc_span)
    wobbly = line_wobble_deg > 0.0
    truth = GroundTruth(
        gap_3d=None if wobbly else radius * math.radians(colat_b - colat_a),
        step_off_3d=max(abs(deviation_a), abs(deviation_b)),
        total_gap_area=(
            None
            if wobbly or deviation_a != deviation_b
            else analytic_zone_area(radius + deviation_a, colat_a, colat_b, arc_span)
        ),
        transforms=(RigidTransform.identity(), RigidTransform.identity()),
    )
    name = case_id or (
        f"band-{colat_a:g}-{colat_b:g}"
        + (f"-span{arc_span:g}" if arc_span < 360.0 else "")
        + (f"-dev{deviation_a:g},{deviation_b:g}" if deviation_a or deviation_b else "")
    )
    return SyntheticCase(
        case_id=name,
        fragment_ids=("frag-a", "frag-b"),
        fragments=(frag_a, frag_b),
        landmarks=(landmarks_a, landmarks_b),
        pairs=(pair,),
        ground_truth=truth,
        seed=seed,
        radius=radius,
    )


def make_displaced_case(case: SyntheticCase, transforms) -> SyntheticCase:
    """Apply one rigid transform per fragment; ground truth follows.

    A uniform whole-case motion keeps the metric ground truths (they are
    rigid invariants); genuinely per-fragment motion voids them, and only
    the per-fragment transforms remain as truth (for registration tests).
    """
    transforms = tuple(transforms)
    if len(transforms) != len(case.fragments):
        raise ValueError(
            f"need {len(case.fragments)} transforms, got {len(transforms)}"
        )
    by_id = dict(zip(case.fragment_ids, transforms))
    fragments = tuple(
        mesh.transformed(t) for mesh, t in zip(case.fragments, transforms)
    )
    landmarks = tuple(t.apply(pts) for pts, t in zip(case.landmarks, transforms))
    pairs = tuple(
        FractureLinePair(
            by_id[p.fragment_a].apply(p.line_a),
            by_id[p.fragment_b].apply(p.line_b),
            p.fragment_a,
            p.fragment_b,
            p.pair_id,
        )
        for p in case.pairs
    )
    first = transforms[0]
    uniform = all(
        np.abs(t.rotation - first.rotation).max() < 1e-12
        and np.abs(t.translation - first.translation).max() < 1e-12
        for t in transforms
    )
    old = case.ground_truth
    truth = GroundTruth(
        gap_3d=old.gap_3d if uniform else None,
        step_off_3d=old.step_off_3d if uniform else None,
        total_gap_area=old.total_gap_area if uniform else None,
        transforms=tuple(t.compose(o) for t, o in zip(transforms, old.transforms)),
    )
    return replace(
        case, fragments=fragments, landmarks=landmarks, pairs=pairs, ground_truth=truth
    )


def interpolate_transform(t: RigidTransform, fraction: float) -> RigidTransform:
    """Scale a rigid motion toward identity (axis-angle and translation)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    rotvec = Rotation.from_matrix(t.rotation).as_rotvec()
    rot = Rotation.from_rotvec(fraction * rotvec).as_matrix()
    return RigidTransform(rot, fraction * t.translation)


def random_rigid_transform(
    rng: np.random.Generator,
    max_rotation_deg: float = 30.0,
    max_translation: float = 20.0,
) -> RigidTransform:
    """Uniform random axis, rotation angle and translation within bounds."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(rng.uniform(0.0, max_rotation_deg))
    rot = Rotation.from_rotvec(angle * axis).as_matrix()
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    translation = rng.uniform(0.0, max_translation) * direction
    return RigidTransform(rot, translation)


#: Named presets for the CLI `synth` subcommand.
PRESETS = {
    "band-40-60": dict(colat_a=40.0, colat_b=60.0),
    "band-30-70": dict(colat_a=30.0, colat_b=70.0),
    "band-45-65": dict(colat_a=45.0, colat_b=65.0),
    "band-40-60-span120": dict(colat_a=40.0, colat_b=60.0, arc_span=120.0),
    "band-40-60-dev0.5": dict(colat_a=40.0, colat_b=60.0, deviation_a=0.5, deviation_b=0.5),
    "band-40-50-step": dict(colat_a=40.0, colat_b=50.0, deviation_a=-0.3, deviation_b=0.4),
    "band-40-60-wobble": dict(colat_a=40.0, colat_b=60.0, line_wobble_deg=2.0),
}


def make_preset(name: str, seed: int = 0) -> SyntheticCase:
    """Build one of the named presets (see PRESETS)."""
    if name not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise ValueError(f"unknown preset {name!r}; known presets: {known}")
    return make_band_case(seed=seed, case_id=name, **PRESETS[name])
