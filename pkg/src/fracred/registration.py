"""Per-fragment rigid registration between original and reduced poses.

Trimmed point-to-point ICP seeded by PCA axis alignment. Reduced scans carry
glue fillets and print artifacts absent from the originals, so each
iteration keeps only the best ``trim_fraction`` of nearest-neighbor matches;
point-to-point (not point-to-plane) matching is used because normals from
semi-automatic segmentations of printed parts are unreliable.

The recovered transform maps the original fragment onto the reduced one;
that convention is printed in every output file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .chamfer import PointSet, mesh_vertex_set
from .errors import DegenerateConfiguration, FracredError
from .geometry import Mesh, RigidTransform
from .validation import as_points, check_fitted

TRANSFORM_CONVENTION = "original_to_reduced"


@dataclass(frozen=True)
class FragmentMatch:
    """One fragment in its original and physically reduced poses."""

    original: Mesh
    reduced: Mesh
    fragment_id: str

    def __post_init__(self):
        if len(self.original) == 0 or len(self.reduced) == 0:
            raise ValueError(f"fragment {self.fragment_id!r}: meshes must be non-empty")


@dataclass(frozen=True)
class RegistrationResult:
    """Outcome of one fragment registration."""

    transform: RigidTransform
    rms: float
    inlier_fraction: float
    iterations: int
    converged: bool
    fragment_id: str = ""
    error: str | None = None
    rms_history: tuple[float, ...] = ()

    @property
    def failed(self) -> bool:
        return self.error is not None


def kabsch(src, dst) -> RigidTransform:
    """Closed-form least-squares rigid motion mapping src[i] onto dst[i].

    Reflections are excluded by sign-correcting the smallest singular
    direction, so the result is always a proper rotation.
    """
    a = as_points(src, "src", min_points=3)
    b = as_points(dst, "dst", min_points=3)
    if a.shape != b.shape:
        raise ValueError(f"src and dst must match in shape: {a.shape} vs {b.shape}")
    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    a0 = a - ca
    sv = np.linalg.svd(a0, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise DegenerateConfiguration(
            "source points are collinear or coincident; rotation is not"
            " identifiable"
        )
    h = a0.T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, cb - rot @ ca)


def _principal_axes(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    if np.linalg.det(evecs) < 0:
        evecs[:, 2] = -evecs[:, 2]
    return evals, evecs


#: The four proper-rotation axis sign combinations.
_SIGN_COMBOS = ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))


def pca_init(src: PointSet, dst: PointSet, trim_fraction: float = 0.9) -> list[RigidTransform]:
    """Centroid + principal-axis alignment candidates.

    Emits the four proper sign combinations, ordered by one-pass trimmed RMS
    ascending, so callers can fall through them.

    Raises
    ------
    DegenerateConfiguration
        If either cloud lacks three distinct principal axes (relative
        eigenvalue gap below 1e-6), e.g. for spherically symmetric clouds.
    """
    ev_s, ax_s = _principal_axes(src.points)
    ev_d, ax_d = _principal_axes(dst.points)
    for name, ev in (("source", ev_s), ("target", ev_d)):
        scale = max(ev[0], 1e-30)
        if (ev[0] - ev[1]) / scale < 1e-6 or (ev[1] - ev[2]) / scale < 1e-6:
            raise DegenerateConfiguration(
                f"{name} cloud has a degenerate principal-axis gap; PCA"
                " initialization is ambiguous"
            )
    cs = src.points.mean(axis=0)
    cd = dst.points.mean(axis=0)
    candidates = []
    for signs in _SIGN_COMBOS:
        rot = (ax_d * np.asarray(signs)) @ ax_s.T
        t = RigidTransform(rot, cd - rot @ cs)
        candidates.append((_trimmed_rms(t.apply(src.points), dst, trim_fraction), t))
    candidates.sort(key=lambda item: item[0])
    return [t for _, t in candidates]


def _trimmed_rms(moved: np.ndarray, dst: PointSet, trim_fraction: float) -> float:
    dists, _ = dst.nearest(moved)
    keep = max(3, int(math.ceil(trim_fraction * dists.size)))
    kept = np.partition(dists, keep - 1)[:keep]
    return float(np.sqrt(np.mean(kept**2)))


def icp_rigid(
    src: PointSet,
    dst: PointSet,
    init: RigidTransform,
    trim_fraction: float = 0.9,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> RegistrationResult:
    """Trimmed point-to-point ICP from an initial transform.

    Each iteration matches every source point to its exact nearest neighbor
    in dst, keeps the best ``trim_fraction`` of matches, and re-solves the
    rigid motion in closed form. The trimmed RMS is non-increasing by
    construction; iteration stops when it changes by less than ``tol`` mm.
    """
    if not 0.5 <= trim_fraction <= 1.0:
        raise ValueError(f"trim_fraction must be in [0.5, 1], got {trim_fraction}")
    points = src.points
    n_keep = max(3, int(math.ceil(trim_fraction * points.shape[0])))
    transform = init
    prev = (math.inf, init)
    history: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        moved = transform.apply(points)
        dists, idx = dst.nearest(moved)
        order = np.argsort(dists, kind="stable")[:n_keep]
        rms = float(np.sqrt(np.mean(dists[order] ** 2)))
        if rms > prev[0] + 1e-12:
            # Trimmed ICP cannot increase its own objective; a rise means
            # numerically flat convergence, so stop at the previous iterate.
            rms, transform = prev
            converged = True
            break
        history.append(rms)
        if prev[0] - rms < tol:
            converged = True
        prev = (rms, transform)
        transform = kabsch(points[order], dst.points[idx[order]])
        if converged:
            break
    return RegistrationResult(
        transform=transform,
        rms=history[-1],
        inlier_fraction=n_keep / points.shape[0],
        iterations=iterations,
        converged=converged,
        rms_history=tuple(history),
    )


class TrimmedICP(BaseEstimator):
    """Trimmed rigid ICP as an sklearn-style estimator.

    ``fit(X, Y)`` registers the source cloud X onto the target cloud Y;
    ``transform(X)`` applies the recovered motion.

    Parameters mirror :func:`icp_rigid`; ``init="pca"`` (default) seeds from
    the best PCA candidate and falls through the others when the first
    stalls, ``init=RigidTransform`` uses a caller-supplied seed.
    """

    def __init__(self, trim_fraction: float = 0.9, max_iter: int = 100, tol: float = 1e-6, init="pca"):
        self.trim_fraction = trim_fraction
        self.max_iter = max_iter
        self.tol = tol
        self.init = init

    def fit(self, X, Y):
        src = PointSet(as_points(X, "X", min_points=3))
        dst = PointSet(as_points(Y, "Y", min_points=3))
        result = register_clouds(
            src,
            dst,
            trim_fraction=self.trim_fraction,
            max_iter=self.max_iter,
            tol=self.tol,
            init=None if self.init == "pca" else self.init,
        )
        self.result_ = result
        self.rotation_ = result.transform.rotation
        self.translation_ = result.transform.translation
        self.rms_ = result.rms
        self.inlier_fraction_ = result.inlier_fraction
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        return self

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "result_")
        return self.result_.transform.apply(as_points(X, "X"))


def register_clouds(
    src: PointSet,
    dst: PointSet,
    trim_fraction: float = 0.9,
    max_iter: int = 100,
    tol: float = 1e-6,
    init: RigidTransform | None = None,
) -> RegistrationResult:
    """PCA-seeded trimmed ICP with candidate fall-through.

    Candidates after the first are tried only while the refined RMS stays
    above 3x the best candidate's initial trimmed RMS; the lowest-RMS result
    wins.
    """
    if init is not None:
        return icp_rigid(src, dst, init, trim_fraction, max_iter, tol)
    candidates = pca_init(src, dst, trim_fraction)
    best_initial = _trimmed_rms(candidates[0].apply(src.points), dst, trim_fraction)
    threshold = 3.0 * max(best_initial, tol)
    best: RegistrationResult | None = None
    for candidate in candidates:
        result = icp_rigid(src, dst, candidate, trim_fraction, max_iter, tol)
        if best is None or result.rms < best.rms:
            best = result
        if best.rms <= threshold:
            break
    return best


def recover_fragment_transforms(
    matches,
    trim_fraction: float = 0.9,
    max_iter: int = 100,
    tol: float = 1e-6,
    seeds: dict[str, RigidTransform] | None = None,
) -> list[RegistrationResult]:
    """Register every fragment of a case; failures are flagged, not fatal.

    ``seeds`` maps fragment ids to manual initial transforms for hard cases
    (e.g. symmetric fragments that defeat the PCA initializer).
    """
    seeds = seeds or {}
    results = []
    for match in matches:
        try:
            src = mesh_vertex_set(match.original)
            dst = mesh_vertex_set(match.reduced)
            result = register_clouds(
                src,
                dst,
                trim_fraction=trim_fraction,
                max_iter=max_iter,
                tol=tol,
                init=seeds.get(match.fragment_id),
            )
            results.append(
                RegistrationResult(
                    transform=result.transform,
                    rms=result.rms,
                    inlier_fraction=result.inlier_fraction,
                    iterations=result.iterations,
                    converged=result.converged,
                    fragment_id=match.fragment_id,
                )
            )
        except FracredError as exc:
            results.append(
                RegistrationResult(
                    transform=RigidTransform.identity(),
                    rms=float("nan"),
                    inlier_fraction=0.0,
                    iterations=0,
                    converged=False,
                    fragment_id=match.fragment_id,
                    error=str(exc),
                )
            )
    return results
