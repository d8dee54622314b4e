"""Foundational geometric types: rigid transforms, meshes, spheres.

All coordinates are millimeters. Types are immutable values and the
operations are pure functions, so everything here is safe to share across
worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePoint, NotOnSphere
from .validation import as_faces, as_point, as_points

#: Tolerance on ||R^T R - I|| and |det(R) - 1| for a proper rotation.
ROTATION_TOL = 1e-9

#: A point closer than this to the sphere center cannot be projected.
CENTER_EPS = 1e-9

#: Maximum |radial deviation| for a point to count as lying on a sphere.
ON_SPHERE_TOL = 1e-6


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion: p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        tr = as_point(self.translation, "translation")
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not np.all(np.isfinite(rot)):
            raise ValueError("rotation contains non-finite entries")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ROTATION_TOL:
            raise ValueError(f"rotation is not orthonormal (max error {err:.3e})")
        det = np.linalg.det(rot)
        if abs(det - 1.0) > ROTATION_TOL:
            raise ValueError(f"rotation must be proper (det=+1), got det={det!r}")
        rot.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        """Build from a 4x4 row-major homogeneous matrix."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"homogeneous matrix must be 4x4, got {m.shape}")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError("last row of a homogeneous rigid matrix must be [0,0,0,1]")
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        """4x4 row-major homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Apply to a (3,) point or (n, 3) array; shape is preserved."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self after other: (self.compose(other))(p) == self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


def apply_transform(t: RigidTransform, p) -> np.ndarray:
    return t.apply(p)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle surface of one bone fragment."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64)
        if verts.size == 0:
            verts = verts.reshape(0, 3)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must have shape (n, 3), got {verts.shape}")
        if not np.all(np.isfinite(verts)):
            raise ValueError("vertices contain non-finite coordinates")
        if 0 < verts.shape[0] < 3:
            raise ValueError("a non-empty mesh needs at least 3 vertices")
        faces = as_faces(self.faces, verts.shape[0])
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def triangle_areas(self) -> np.ndarray:
        """Per-face area in mm^2."""
        v = self.vertices
        f = self.faces
        if f.shape[0] == 0:
            return np.zeros(0)
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def n_degenerate_faces(self, area_eps: float = 1e-12) -> int:
        """Zero-area faces are permitted but counted for reporting."""
        if self.faces.shape[0] == 0:
            return 0
        return int(np.count_nonzero(self.triangle_areas() <= area_eps))

    def area(self) -> float:
        return float(self.triangle_areas().sum())

    def transformed(self, t: RigidTransform) -> "Mesh":
        return Mesh(t.apply(self.vertices), self.faces)


@dataclass(frozen=True)
class Sphere:
    """Fitted articular-surface model."""

    center: np.ndarray
    radius: float
    rms_residual: float = 0.0

    def __post_init__(self):
        center = as_point(self.center, "center")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValueError(f"radius must be positive, got {self.radius!r}")
        if not (self.rms_residual >= 0 and np.isfinite(self.rms_residual)):
            raise ValueError(f"rms_residual must be >= 0, got {self.rms_residual!r}")


def project_to_sphere(s: Sphere, p) -> tuple[np.ndarray, np.ndarray]:
    """Radially project point(s) onto the sphere.

    Returns ``(projected, radial_deviation)`` where the deviation is signed,
    positive outside the sphere. Accepts a (3,) point or an (n, 3) array.

    Raises
    ------
    DegeneratePoint
        If any point coincides with the sphere center.
    """
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts = as_points(pts, "points")
    rel = pts - s.center
    dist = np.linalg.norm(rel, axis=1)
    if np.any(dist <= CENTER_EPS):
        raise DegeneratePoint(
            f"point at index {int(np.argmax(dist <= CENTER_EPS))} coincides"
            " with the sphere center"
        )
    projected = s.center + rel * (s.radius / dist)[:, None]
    deviation = dist - s.radius
    if single:
        return projected[0], deviation[0]
    return projected, deviation


def geodesic_distance(s: Sphere, a, b) -> float:
    """Great-circle distance between two on-sphere points, in mm.

    The angle uses atan2(||u x v||, u . v), which stays accurate near 0
    and pi where acos loses precision.

    Raises
    ------
    NotOnSphere
        If either point is further than 1e-6 mm from the sphere surface.
    """
    a = as_point(a, "a")
    b = as_point(b, "b")
    u = a - s.center
    v = b - s.center
    for name, w in (("a", u), ("b", v)):
        dev = abs(np.linalg.norm(w) - s.radius)
        if dev >= ON_SPHERE_TOL:
            raise NotOnSphere(
                f"point {name} is {dev:.3e} mm off the sphere; project it first"
            )
    angle = np.arctan2(np.linalg.norm(np.cross(u, v)), np.dot(u, v))
    return float(s.radius * angle)


def geodesic_distance_matrix(s: Sphere, a_points: np.ndarray, b_points: np.ndarray) -> np.ndarray:
    """Pairwise geodesic distances between two arrays of on-sphere points.

    Callers guarantee the points lie on ``s``; this skips the per-point
    surface check for speed and normalizes directions instead.
    """
    ua = (a_points - s.center) / s.radius
    ub = (b_points - s.center) / s.radius
    dots = ua @ ub.T
    cross = np.cross(ua[:, None, :], ub[None, :, :])
    cross_norm = np.linalg.norm(cross, axis=2)
    return s.radius * np.arctan2(cross_norm, dots)
