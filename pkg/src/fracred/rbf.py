"""Thin-plate-spline interpolation of radial deviations over the 2D chart.

The TPS kernel r^2 log r plus an affine polynomial term is parameter-free
(no shape parameter to tune), interpolates its nodes exactly at zero
smoothing, and reproduces affine fields exactly; the test suite leans on
both properties. If the augmented system is ill-conditioned a small ridge
term is added and the model is flagged so the condition surfaces in reports.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
from scipy.linalg import get_lapack_funcs
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import CollinearNodes, IllConditionedWarning, SingularSystem
from .validation import check_fitted

#: Nodes closer than this (mm) are merged, averaging their values.
DUPLICATE_TOL = 1e-9

#: 1-norm condition estimate above which the ridge fallback kicks in.
CONDITION_LIMIT = 1e12

#: Ridge magnitude, scaled by mean kernel diagonal magnitude.
RIDGE_FACTOR = 1e-8


def _as_nodes(x, name: str = "nodes") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def merge_duplicate_nodes(nodes: np.ndarray, values: np.ndarray, tol: float = DUPLICATE_TOL):
    """Union-find merge of nodes closer than ``tol``; values are averaged."""
    pairs = cKDTree(nodes).query_pairs(tol, output_type="ndarray")
    if pairs.size == 0:
        return nodes, values
    parent = np.arange(nodes.shape[0])

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(int(i)) for i in range(nodes.shape[0])])
    uniq, inverse = np.unique(roots, return_inverse=True)
    merged_nodes = np.zeros((uniq.size, 2))
    merged_values = np.zeros(uniq.size)
    counts = np.bincount(inverse).astype(float)
    np.add.at(merged_nodes, inverse, nodes)
    np.add.at(merged_values, inverse, values)
    return merged_nodes / counts[:, None], merged_values / counts


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared distances (n, m) via the Gram trick (GEMM-fast)."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    r2 = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(r2, 0.0, out=r2)
    return r2


def _tps_kernel(r_sq: np.ndarray) -> np.ndarray:
    """phi(r) = r^2 log r, written as 0.5 r^2 log r^2 with phi(0) = 0."""
    # log(max(r2, tiny)) keeps r2 == 0 rows finite; 0 * log(tiny) == 0 exactly.
    return 0.5 * r_sq * np.log(np.maximum(r_sq, 1e-300))


def _condition_estimate(lu, piv, matrix: np.ndarray) -> float:
    gecon = get_lapack_funcs(("gecon",), (matrix,))[0]
    anorm = np.linalg.norm(matrix, 1)
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0:
        return np.inf
    return 1.0 / rcond


class ThinPlateSpline(BaseEstimator, RegressorMixin):
    """Exact TPS interpolator over 2D scattered nodes.

    Attributes
    ----------
    nodes_ : ndarray of shape (n, 2)
        Training nodes after duplicate merging.
    weights_ : ndarray of shape (n,)
        Kernel weights (orthogonal to constants and linears).
    affine_ : ndarray of shape (3,)
        Coefficients of the affine term a0 + a1*u + a2*v.
    regularized_ : bool
        True when the ridge fallback was applied; reports must flag this.
    condition_ : float
        1-norm condition estimate of the original augmented system.
    """

    def fit(self, X, y):
        nodes = _as_nodes(X, "X")
        values = np.asarray(y, dtype=np.float64).ravel()
        if values.shape[0] != nodes.shape[0]:
            raise ValueError(
                f"X and y disagree on node count: {nodes.shape[0]} vs {values.shape[0]}"
            )
        nodes, values = merge_duplicate_nodes(nodes, values)
        n = nodes.shape[0]
        if n < 3:
            raise CollinearNodes("need at least 3 distinct nodes")
        centered = nodes - nodes.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[-1] <= 1e-9 * max(sv[0], 1.0):
            raise CollinearNodes("nodes are collinear; the TPS system is singular")

        k = _tps_kernel(_sq_dists(nodes, nodes))
        p = np.hstack([np.ones((n, 1)), nodes])
        a = np.zeros((n + 3, n + 3))
        a[:n, :n] = k
        a[:n, n:] = p
        a[n:, :n] = p.T
        rhs = np.concatenate([values, np.zeros(3)])

        sol, condition, regularized = self._solve(a, rhs, n, k)
        self.nodes_ = nodes
        self.values_ = values
        self.weights_ = sol[:n]
        self.affine_ = sol[n:]
        self.condition_ = condition
        self.regularized_ = regularized
        return self

    @staticmethod
    def _solve(a: np.ndarray, rhs: np.ndarray, n: int, k: np.ndarray):
        try:
            lu, piv = scipy.linalg.lu_factor(a)
            condition = _condition_estimate(lu, piv, a)
        except (scipy.linalg.LinAlgError, ValueError):
            condition = np.inf
        if np.isfinite(condition) and condition <= CONDITION_LIMIT:
            return scipy.linalg.lu_solve((lu, piv), rhs), condition, False

        # Ridge fallback on the kernel block, scaled by its diagonal magnitude.
        scale = np.trace(np.abs(k)) / max(n, 1)
        if scale <= 0:
            scale = 1.0
        a_ridge = a.copy()
        a_ridge[:n, :n] += RIDGE_FACTOR * scale * np.eye(n)
        try:
            sol = scipy.linalg.solve(a_ridge, rhs)
        except scipy.linalg.LinAlgError as exc:
            raise SingularSystem(
                "TPS system is singular even after ridge regularization"
            ) from exc
        warnings.warn(
            f"TPS system condition estimate {condition:.2e} exceeded"
            f" {CONDITION_LIMIT:.0e}; ridge fallback applied",
            IllConditionedWarning,
            stacklevel=3,
        )
        return sol, condition, True

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "weights_")
        pts = _as_nodes(X, "X")
        out = np.empty(pts.shape[0])
        # Chunked so the (n_eval, n_nodes) kernel block stays cache-friendly.
        chunk = max(256, int(4_000_000 // max(self.nodes_.shape[0], 1)))
        for lo in range(0, pts.shape[0], chunk):
            block = pts[lo : lo + chunk]
            k = _tps_kernel(_sq_dists(block, self.nodes_))
            out[lo : lo + chunk] = k @ self.weights_
        return out + self.affine_[0] + pts @ self.affine_[1:]


def rbf_fit(nodes, values) -> ThinPlateSpline:
    """Fit the TPS deviation model; functional alias used by the pipeline."""
    return ThinPlateSpline().fit(nodes, values)
