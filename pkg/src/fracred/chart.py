"""Azimuthal-equidistant chart about a data-derived center direction.

The chart maps unit directions from the sphere center to plane coordinates
(u, v) in millimeters such that geodesic distance from the chart center is
exact (rho = R * theta). Distortion is second order in the cap angle, and
there is no pole singularity anywhere inside a single cap.

The in-plane axes are anchored to the data (first projected fracture-line
point), not to a world axis, so the whole chart co-rotates with a rigidly
moved case and downstream triangulations reproduce bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform

#: Tangential component below which a direction counts as the chart center.
_TANGENT_EPS = 1e-12


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n <= _TANGENT_EPS:
        raise ValueError("cannot normalize a near-zero vector")
    return v / n


@dataclass(frozen=True)
class TangentChart:
    """Azimuthal-equidistant projection about ``center_direction``."""

    center_direction: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    radius: float

    @classmethod
    def fit(cls, directions: np.ndarray, radius: float, anchor: np.ndarray | None = None) -> "TangentChart":
        """Build the chart about the normalized mean of ``directions``.

        ``anchor`` fixes the in-plane e1 axis (its tangential component);
        when omitted, the direction with the largest tangential part is
        used. Anchoring to case data keeps the chart rigid-equivariant.
        """
        dirs = np.asarray(directions, dtype=np.float64)
        mean = dirs.mean(axis=0)
        n = _normalize(mean)
        if anchor is not None:
            t = np.asarray(anchor, dtype=np.float64) - (anchor @ n) * n
            if np.linalg.norm(t) <= _TANGENT_EPS:
                anchor = None
        if anchor is None:
            tang = dirs - np.outer(dirs @ n, n)
            idx = int(np.argmax(np.linalg.norm(tang, axis=1)))
            t = tang[idx]
            if np.linalg.norm(t) <= _TANGENT_EPS:
                # All directions coincide with the center; orientation is free.
                t = np.array([1.0, 0.0, 0.0]) - n[0] * n
                if np.linalg.norm(t) <= _TANGENT_EPS:
                    t = np.array([0.0, 1.0, 0.0]) - n[1] * n
        e1 = _normalize(t)
        e2 = np.cross(n, e1)
        return cls(n, e1, e2, float(radius))

    @property
    def frame(self) -> RigidTransform:
        """World-to-chart rotation (rows e1, e2, center_direction)."""
        return RigidTransform(np.vstack([self.e1, self.e2, self.center_direction]), np.zeros(3))

    def forward(self, directions: np.ndarray) -> np.ndarray:
        """Map unit directions to (u, v) chart coordinates in mm."""
        dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        cos_t = np.clip(dirs @ self.center_direction, -1.0, 1.0)
        tang = dirs - np.outer(cos_t, self.center_direction)
        tnorm = np.linalg.norm(tang, axis=1)
        theta = np.arctan2(tnorm, cos_t)
        uv = np.zeros((dirs.shape[0], 2))
        ok = tnorm > _TANGENT_EPS
        scale = np.zeros_like(tnorm)
        scale[ok] = self.radius * theta[ok] / tnorm[ok]
        uv[:, 0] = scale * (tang @ self.e1)
        uv[:, 1] = scale * (tang @ self.e2)
        return uv

    def inverse(self, uv: np.ndarray) -> np.ndarray:
        """Map (u, v) chart coordinates back to unit directions."""
        pts = np.atleast_2d(np.asarray(uv, dtype=np.float64))
        rho = np.linalg.norm(pts, axis=1)
        theta = rho / self.radius
        dirs = np.empty((pts.shape[0], 3))
        ok = rho > _TANGENT_EPS
        alpha = np.zeros((pts.shape[0], 2))
        alpha[ok] = pts[ok] / rho[ok, None]
        plane = np.outer(alpha[:, 0], self.e1) + np.outer(alpha[:, 1], self.e2)
        dirs[:] = (
            np.cos(theta)[:, None] * self.center_direction
            + np.sin(theta)[:, None] * plane
        )
        dirs[~ok] = self.center_direction
        return dirs

    def max_angle(self, directions: np.ndarray) -> float:
        """Largest angle (radians) between any direction and the center."""
        dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        cos_t = np.clip(dirs @ self.center_direction, -1.0, 1.0)
        return float(np.arccos(cos_t.min()))
