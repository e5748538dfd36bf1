"""Gaussian-kernel maximum mean discrepancy with a deterministic sum order.

The estimator here is the unbiased two-sample form: within-set kernel sums
exclude the diagonal, so the value can legitimately be negative and is zero
in expectation when both sets come from the same distribution. All kernel
sums are accumulated over fixed 64x64 tiles in row-major order (pairwise
reduction inside each tile), which keeps results bit-identical run to run
no matter how the surrounding code is parallelized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

KERNEL_GAUSSIAN_RBF = "gaussian_rbf"
ESTIMATOR_UNBIASED = "unbiased_no_diagonal"

# Tile edge for the blocked accumulation order.
_TILE = 64


class DegenerateBandwidthError(ValueError):
    """All pairwise distances are zero; the median heuristic is undefined."""


@dataclass(frozen=True)
class MmdConfig:
    """Kernel and bandwidth choice.

    ``sigma=None`` selects the median heuristic (median pairwise distance
    of whatever point set the caller hands to the bandwidth step); a float
    fixes the bandwidth directly.
    """

    sigma: float | None = None
    kernel: str = KERNEL_GAUSSIAN_RBF
    estimator: str = ESTIMATOR_UNBIASED

    def __post_init__(self):
        if self.kernel != KERNEL_GAUSSIAN_RBF:
            raise ValueError("unsupported kernel %r" % (self.kernel,))
        if self.estimator != ESTIMATOR_UNBIASED:
            raise ValueError("unsupported estimator %r" % (self.estimator,))
        if self.sigma is not None:
            sigma = float(self.sigma)
            if not math.isfinite(sigma) or sigma <= 0.0:
                raise ValueError("sigma must be a positive finite float, got %r" % (self.sigma,))
            object.__setattr__(self, "sigma", sigma)

    @property
    def sigma_policy(self) -> str:
        return "fixed" if self.sigma is not None else "median_heuristic"


@dataclass(frozen=True)
class MmdValue:
    """Estimator output together with the bandwidth actually used."""

    value: float
    m: int
    n: int
    sigma: float


def _as_points(x, name: str) -> np.ndarray:
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("%s must be a 2-D point set, got shape %r" % (name, pts.shape))
    if not np.isfinite(pts).all():
        raise ValueError("%s contains NaN or Inf" % name)
    return pts


def rbf_kernel(x, y, sigma: float) -> float:
    """exp(-||x - y||^2 / (2 sigma^2)) for a single pair of vectors."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sq = float(np.sum((x - y) ** 2))
    return math.exp(-sq / (2.0 * sigma * sigma))


def median_heuristic_sigma(points) -> float:
    """Median Euclidean distance over unordered distinct pairs.

    Takes the lower median when the pair count is even. Raises
    DegenerateBandwidthError when the median is zero (e.g. every point
    identical); callers should fall back to a fixed sigma in that case.
    """
    pts = _as_points(points, "points")
    if pts.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 points")
    dists = pdist(pts, "euclidean")
    dists.sort()
    sigma = float(dists[(dists.size - 1) // 2])
    if sigma <= 0.0:
        raise DegenerateBandwidthError(
            "pairwise-distance median is zero; pass a fixed sigma instead"
        )
    return sigma


def kernel_matrix(a, b, sigma: float) -> np.ndarray:
    """Dense kernel matrix K[i, j] = rbf(a[i], b[j], sigma).

    Squared distances come from cdist, which evaluates (i, j) and (j, i)
    with the same differences, so K(A, A) is exactly symmetric with an
    exact unit diagonal.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    a = _as_points(a, "a")
    b = _as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch: %d vs %d" % (a.shape[1], b.shape[1]))
    sq = cdist(a, b, "sqeuclidean")
    return np.exp(sq / (-2.0 * sigma * sigma))


def _blocked_sum(matrix: np.ndarray) -> float:
    # Fixed traversal: 64x64 tiles, row-major over tiles; numpy's pairwise
    # reduction handles the inside of each tile. Total is accumulated in
    # tile order, so the result does not depend on thread count. Each tile
    # is copied to C order first: reduction order must follow the logical
    # layout, or summing a transposed view drifts by an ulp.
    rows, cols = matrix.shape
    total = 0.0
    for i in range(0, rows, _TILE):
        block_row = matrix[i : i + _TILE]
        for j in range(0, cols, _TILE):
            tile = np.ascontiguousarray(block_row[:, j : j + _TILE])
            total += float(np.sum(tile))
    return total


def resolve_sigma(cfg: MmdConfig, bandwidth_points) -> float:
    """Fixed sigma from the config, or the median heuristic over ``bandwidth_points``."""
    if cfg.sigma is not None:
        return cfg.sigma
    return median_heuristic_sigma(bandwidth_points)


def mmd2_unbiased(g, r, cfg: MmdConfig = MmdConfig()) -> MmdValue:
    """Unbiased squared MMD between point sets ``g`` (m rows) and ``r`` (n rows).

    value = S_g / (m (m-1)) + S_r / (n (n-1)) - 2 C / (m n)

    where S_g and S_r are within-set kernel sums without the diagonal and
    C is the cross-set sum. Under the median-heuristic policy the
    bandwidth is taken over the union of both sets. The cross sum is
    evaluated in both orientations and averaged, which makes
    mmd2_unbiased(g, r) == mmd2_unbiased(r, g) exact, not just close.
    """
    g = _as_points(g, "g")
    r = _as_points(r, "r")
    m, n = g.shape[0], r.shape[0]
    if m < 2 or n < 2:
        raise ValueError("need at least 2 points per set, got m=%d n=%d" % (m, n))
    if g.shape[1] != r.shape[1]:
        raise ValueError("dimension mismatch: %d vs %d" % (g.shape[1], r.shape[1]))
    sigma = cfg.sigma if cfg.sigma is not None else median_heuristic_sigma(np.vstack([g, r]))

    k_gg = kernel_matrix(g, g, sigma)
    k_rr = kernel_matrix(r, r, sigma)
    k_gr = kernel_matrix(g, r, sigma)

    # Unit diagonal is exact (see kernel_matrix), so subtracting the row
    # count removes it exactly.
    sum_g = _blocked_sum(k_gg) - float(m)
    sum_r = _blocked_sum(k_rr) - float(n)
    cross = 0.5 * (_blocked_sum(k_gr) + _blocked_sum(k_gr.T))

    value = sum_g / (m * (m - 1)) + sum_r / (n * (n - 1)) - 2.0 * cross / (m * n)
    return MmdValue(value=value, m=m, n=n, sigma=sigma)
