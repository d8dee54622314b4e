"""Array validation helpers.

Coordinates are always float64 millimeters. Every public entry point funnels
its array-like inputs through these checks so shape and finiteness errors
surface with a readable message instead of deep inside numpy.
"""

from __future__ import annotations

import numpy as np

#: Minimum separation between consecutive polyline vertices, in mm.
POLYLINE_MIN_SEPARATION = 1e-9


def as_point(p, name: str = "point") -> np.ndarray:
    """Coerce to a finite (3,) float64 vector."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def as_points(pts, name: str = "points", min_points: int = 1) -> np.ndarray:
    """Coerce to a finite (n, 3) float64 array with at least ``min_points`` rows."""
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim == 1 and arr.shape == (3,):
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] < min_points:
        raise ValueError(f"{name} needs at least {min_points} points, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def as_polyline(pts, name: str = "polyline") -> np.ndarray:
    """Validate an ordered polyline: >= 2 points, consecutive points distinct."""
    arr = as_points(pts, name=name, min_points=2)
    steps = np.linalg.norm(np.diff(arr, axis=0), axis=1)
    if np.any(steps <= POLYLINE_MIN_SEPARATION):
        bad = int(np.argmax(steps <= POLYLINE_MIN_SEPARATION))
        raise ValueError(
            f"{name} has coincident consecutive points at index {bad}"
            f" (separation {steps[bad]:.3e} mm)"
        )
    return arr


def as_faces(faces, n_vertices: int, name: str = "faces") -> np.ndarray:
    """Coerce to an (m, 3) int64 face-index array and range-check the indices."""
    arr = np.asarray(faces, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (m, 3), got {arr.shape}")
    if arr.min() < 0 or arr.max() >= n_vertices:
        bad = int(np.argmax(np.any((arr < 0) | (arr >= n_vertices), axis=1)))
        raise ValueError(
            f"{name}[{bad}] references vertex outside [0, {n_vertices})"
        )
    return arr


def check_fitted(estimator, attribute: str) -> None:
    """Raise sklearn's NotFittedError if ``estimator`` lacks ``attribute``."""
    from sklearn.exceptions import NotFittedError

    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet;"
            " call fit() first."
        )
