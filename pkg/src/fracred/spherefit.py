"""Least-squares sphere fitting to picked articular-surface points.

Two stages: a linear algebraic fit used as the initializer, then
Gauss-Newton refinement of the geometric objective sum(||p - c|| - R)^2.
The geometric stage is mandatory for clinical use: articular landmark sets
cover well under half a sphere, and algebraic fits are biased on partial
arcs. No outlier rejection is applied; landmarks are few and expert-picked.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DegenerateConfiguration, NonConvergenceWarning
from .geometry import Sphere
from .validation import as_points, check_fitted

#: Smallest singular value (mm) of the centered landmark matrix below which
#: the points are considered coplanar/collinear.
PLANARITY_TOL = 1e-6


@dataclass(frozen=True)
class LandmarkSet:
    """Labeled articular-surface points; at least 4, not all coplanar."""

    points: np.ndarray
    label: str = "articular_surface"
    provenance: str = ""

    def __post_init__(self):
        pts = as_points(self.points, "landmarks", min_points=4)
        _check_not_coplanar(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def _check_not_coplanar(pts: np.ndarray) -> None:
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= PLANARITY_TOL:
        raise DegenerateConfiguration(
            f"landmarks are coplanar within {PLANARITY_TOL} mm"
            " (smallest singular value {:.3e}); a sphere is not identifiable".format(sv[-1])
        )


def _geometric_rms(pts: np.ndarray, center: np.ndarray, radius: float) -> float:
    return float(np.sqrt(np.mean((np.linalg.norm(pts - center, axis=1) - radius) ** 2)))


def fit_sphere_algebraic(pts) -> Sphere:
    """Linear least-squares sphere through the points.

    Minimizes sum(||p||^2 - 2 c.p - k)^2 over center c and k = R^2 - ||c||^2.
    Reported rms_residual is geometric (radial), so the two stages compare.
    """
    points = pts.points if isinstance(pts, LandmarkSet) else as_points(pts, "points", 4)
    _check_not_coplanar(points)
    a = np.hstack([2.0 * points, np.ones((points.shape[0], 1))])
    b = np.einsum("ij,ij->i", points, points)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < 4:
        raise DegenerateConfiguration("normal equations are singular; points degenerate")
    center = sol[:3]
    r_sq = sol[3] + center @ center
    if r_sq <= 0:
        raise DegenerateConfiguration("algebraic fit produced a non-positive radius")
    radius = float(np.sqrt(r_sq))
    return Sphere(center, radius, _geometric_rms(points, center, radius))


def fit_sphere_geometric(
    pts,
    init: Sphere | None = None,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> Sphere:
    """Gauss-Newton refinement of the geometric objective sum(||p-c||-R)^2.

    Iterates until the parameter step is below ``tol`` relative or the
    iteration cap is reached; in the latter case the best iterate is
    returned and a NonConvergenceWarning is emitted, never a silent result.
    """
    points = pts.points if isinstance(pts, LandmarkSet) else as_points(pts, "points", 4)
    _check_not_coplanar(points)
    if init is None:
        init = fit_sphere_algebraic(points)
    center = init.center.copy()
    radius = float(init.radius)

    best = (init.rms_residual, center.copy(), radius)
    converged = False
    for _ in range(max_iter):
        rel = points - center
        dist = np.linalg.norm(rel, axis=1)
        if np.any(dist <= 1e-12):
            raise DegenerateConfiguration("a landmark coincides with the center iterate")
        resid = dist - radius
        jac = np.empty((points.shape[0], 4))
        jac[:, :3] = -rel / dist[:, None]
        jac[:, 3] = -1.0
        step, _, rank, _ = np.linalg.lstsq(jac, -resid, rcond=None)
        if rank < 4:
            raise DegenerateConfiguration("Gauss-Newton normal equations are singular")
        center = center + step[:3]
        radius = radius + step[3]
        if radius <= 0:
            raise DegenerateConfiguration("geometric refinement drove the radius negative")
        rms = _geometric_rms(points, center, radius)
        if rms < best[0]:
            best = (rms, center.copy(), radius)
        scale = max(radius, float(np.linalg.norm(center)), 1.0)
        if np.linalg.norm(step) < tol * scale:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"sphere refinement did not converge in {max_iter} iterations;"
            " returning the best iterate",
            NonConvergenceWarning,
            stacklevel=2,
        )
    rms, center, radius = best
    # Refinement must never lose ground against its initializer.
    if rms > init.rms_residual + 1e-12:
        return Sphere(init.center, init.radius, init.rms_residual)
    return Sphere(center, radius, rms)


def fit_sphere(pts, max_iter: int = 100, tol: float = 1e-10) -> Sphere:
    """Full two-stage fit: algebraic initializer plus geometric refinement."""
    init = fit_sphere_algebraic(pts)
    return fit_sphere_geometric(pts, init, max_iter=max_iter, tol=tol)


class SphereFit(BaseEstimator):
    """Sphere fitting as an sklearn-style estimator.

    Parameters
    ----------
    method : {"geometric", "algebraic"}
        ``geometric`` (default) runs the two-stage fit; ``algebraic`` stops
        after the linear stage.
    max_iter : int
        Gauss-Newton iteration cap.
    tol : float
        Relative parameter-step convergence threshold.

    Attributes
    ----------
    center_ : ndarray of shape (3,)
    radius_ : float
    rms_residual_ : float
        Root-mean-square radial distance of the training points.
    sphere_ : Sphere
        The fitted sphere as the pipeline value type.
    """

    def __init__(self, method: str = "geometric", max_iter: int = 100, tol: float = 1e-10):
        self.method = method
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        if self.method not in ("geometric", "algebraic"):
            raise ValueError(f"method must be 'geometric' or 'algebraic', got {self.method!r}")
        points = as_points(X, "X", min_points=4)
        if self.method == "algebraic":
            sphere = fit_sphere_algebraic(points)
        else:
            sphere = fit_sphere(points, max_iter=self.max_iter, tol=self.tol)
        self.sphere_ = sphere
        self.center_ = sphere.center
        self.radius_ = sphere.radius
        self.rms_residual_ = sphere.rms_residual
        return self

    def predict(self, X) -> np.ndarray:
        """Signed radial deviation of each point (positive outside)."""
        check_fitted(self, "sphere_")
        points = as_points(X, "X")
        return np.linalg.norm(points - self.center_, axis=1) - self.radius_

    def score(self, X, y=None) -> float:
        """Negative RMS radial deviation (higher is better)."""
        return -float(np.sqrt(np.mean(self.predict(X) ** 2)))
