"""Conventional baselines to report alongside the MMD family.

Covers Gaussian-fit Frechet distance on embeddings, PSNR/SSIM on 8-bit
grayscale images, cosine retrieval, and a k-NN class probe. These are
the scores most papers already show; having them in the same tool makes
side-by-side tables cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.signal import correlate2d
from scipy.spatial.distance import cdist

from .mmd import MmdConfig
from .metrics import _two_set_report
from .report import MetricReport
from .store import EmbeddingSet

# Eigenvalues of a covariance may dip slightly negative from roundoff;
# anything above this is clamped to zero, anything below is rejected.
_EIG_TOLERANCE = -1e-8

_PEAK = 255.0

# 11x11 Gaussian window, std 1.5, the usual single-scale SSIM choice.
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = (0.01 * _PEAK) ** 2
_SSIM_C2 = (0.03 * _PEAK) ** 2


@dataclass(frozen=True)
class GaussianFit:
    """Mean vector and unbiased covariance of a point set."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("mean must be (d,), cov must be (d, d)")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def fit_gaussian(e: EmbeddingSet) -> GaussianFit:
    """Sample mean and unbiased (n-1) covariance. Needs n >= 2."""
    if e.count < 2:
        raise ValueError("need at least 2 samples to fit, got %d" % e.count)
    x = e.as_float64()
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (e.count - 1)
    cov = 0.5 * (cov + cov.T)  # exact symmetry
    return GaussianFit(mean=mean, cov=cov)


def _psd_sqrt(cov: np.ndarray, what: str) -> np.ndarray:
    values, vectors = np.linalg.eigh(cov)
    if values.min(initial=0.0) < _EIG_TOLERANCE:
        raise ValueError(
            "%s is not positive semi-definite (eigenvalue %g)" % (what, values.min())
        )
    values = np.maximum(values, 0.0)
    return (vectors * np.sqrt(values)) @ vectors.T


def fid(a: GaussianFit, b: GaussianFit) -> float:
    """Frechet distance between two Gaussian fits.

    ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with the matrix
    square root taken through the symmetric product
    Sa^{1/2} Sb Sa^{1/2}, so only symmetric eigendecompositions are
    involved. Tiny negative totals from roundoff clamp to zero.
    """
    if a.mean.size != b.mean.size:
        raise ValueError("dimension mismatch: %d vs %d" % (a.mean.size, b.mean.size))
    root_a = _psd_sqrt(a.cov, "first covariance")
    inner = root_a @ b.cov @ root_a
    inner = 0.5 * (inner + inner.T)
    values = np.linalg.eigh(inner)[0]
    if values.min(initial=0.0) < _EIG_TOLERANCE:
        raise ValueError(
            "covariance product is not positive semi-definite (eigenvalue %g)"
            % values.min()
        )
    trace_sqrt = float(np.sqrt(np.maximum(values, 0.0)).sum())
    delta = a.mean - b.mean
    value = float(delta @ delta + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def embedding_mmd(generated: EmbeddingSet, reference: EmbeddingSet, cfg: MmdConfig = MmdConfig()) -> MetricReport:
    """Same estimator as tmmd, reported under the baseline label."""
    return _two_set_report("embedding-mmd", generated, reference, cfg)


def load_image_gray(path) -> np.ndarray:
    """Decode a PNG into 8-bit grayscale.

    RGB inputs are reduced with BT.601 weights (0.299, 0.587, 0.114),
    rounded half-up; grayscale inputs pass through untouched.
    """
    from PIL import Image

    with Image.open(str(path)) as img:
        if img.format != "PNG":
            raise ValueError("%s: expected a PNG image, got %s" % (path, img.format))
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        if img.mode == "RGB":
            rgb = np.asarray(img, dtype=np.float64)
            luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
            return np.floor(luma + 0.5).clip(0, 255).astype(np.uint8)
        raise ValueError("%s: unsupported PNG mode %s (need 8-bit RGB or gray)" % (path, img.mode))


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.dtype != np.uint8 or b.dtype != np.uint8:
        raise ValueError("images must be uint8 grayscale")
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("images must be 2-D grayscale")
    if a.shape != b.shape:
        raise ValueError("image shapes differ: %r vs %r" % (a.shape, b.shape))
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB over 8-bit images; inf for identical."""
    a, b = _check_pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(_PEAK * _PEAK / mse)


def _ssim_window() -> np.ndarray:
    half = _SSIM_WINDOW // 2
    coords = np.arange(_SSIM_WINDOW, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * _SSIM_SIGMA**2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim(a, b) -> float:
    """Mean single-scale SSIM with an 11x11 Gaussian window.

    Only fully valid window positions count (no padding), so both sides
    must be at least 11 pixels in each dimension.
    """
    a, b = _check_pair(a, b)
    if min(a.shape) < _SSIM_WINDOW:
        raise ValueError(
            "images must be at least %dx%d for SSIM, got %r"
            % (_SSIM_WINDOW, _SSIM_WINDOW, a.shape)
        )
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    w = _ssim_window()

    mu_x = correlate2d(x, w, mode="valid")
    mu_y = correlate2d(y, w, mode="valid")
    xx = correlate2d(x * x, w, mode="valid")
    yy = correlate2d(y * y, w, mode="valid")
    xy = correlate2d(x * y, w, mode="valid")

    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov_xy = xy - mu_x * mu_y

    numer = (2.0 * mu_x * mu_y + _SSIM_C1) * (2.0 * cov_xy + _SSIM_C2)
    denom = (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
    return float(np.mean(numer / denom))


@dataclass(frozen=True)
class RetrievalResult:
    """Hit fractions at each requested depth plus the rank of every true pair."""

    topk: dict[int, float]
    ranks: dict[str, int]

    @property
    def top1(self) -> float:
        return self.topk.get(1, float("nan"))

    @property
    def top5(self) -> float:
        return self.topk.get(5, float("nan"))


def retrieval_topk(
    queries: EmbeddingSet,
    gallery: EmbeddingSet,
    pairing: Mapping[str, str],
    ks: Sequence[int] = (1, 5),
) -> RetrievalResult:
    """Cosine retrieval: fraction of queries whose true pair ranks in the top k.

    Candidates are ordered by descending cosine similarity with ties
    broken by gallery id ascending. Every query id must be mapped to an
    existing gallery id, and no k may exceed the gallery size.
    """
    if queries.count < 1 or gallery.count < 1:
        raise ValueError("queries and gallery must be non-empty")
    ks = sorted(set(int(k) for k in ks))
    if any(k < 1 for k in ks):
        raise ValueError("k must be positive")
    if max(ks) > gallery.count:
        raise ValueError("k=%d exceeds gallery size %d" % (max(ks), gallery.count))
    gallery_pos = {gid: i for i, gid in enumerate(gallery.ids)}
    for qid in queries.ids:
        if qid not in pairing:
            raise ValueError("query %r has no true pair" % qid)
        if pairing[qid] not in gallery_pos:
            raise ValueError("query %r maps to unknown gallery id %r" % (qid, pairing[qid]))

    q = queries.as_float64()
    g = gallery.as_float64()
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    gn = np.linalg.norm(g, axis=1, keepdims=True)
    # Zero vectors have no direction; give them zero similarity everywhere.
    q = np.divide(q, qn, out=np.zeros_like(q), where=qn > 0)
    g = np.divide(g, gn, out=np.zeros_like(g), where=gn > 0)
    sims = q @ g.T

    gallery_ids = np.asarray(gallery.ids, dtype=object)
    ranks: dict[str, int] = {}
    for i, qid in enumerate(queries.ids):
        order = np.lexsort((gallery_ids, -sims[i]))
        target = gallery_pos[pairing[qid]]
        ranks[qid] = int(np.nonzero(order == target)[0][0]) + 1
    rank_values = np.asarray(list(ranks.values()))
    topk = {k: float(np.mean(rank_values <= k)) for k in ks}
    return RetrievalResult(topk=topk, ranks=ranks)


def knn_probe(
    train: EmbeddingSet,
    train_labels: Sequence[str],
    test: EmbeddingSet,
    test_labels: Sequence[str],
    k: int = 5,
) -> float:
    """Accuracy of a k-nearest-neighbor class vote (Euclidean distance).

    k must be odd and no larger than the training set. Vote ties break
    toward the label with the smallest mean distance among the k
    neighbors, then lexicographically.
    """
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be a positive odd integer, got %d" % k)
    if k > train.count:
        raise ValueError("k=%d exceeds training set size %d" % (k, train.count))
    if len(train_labels) != train.count or len(test_labels) != test.count:
        raise ValueError("label count must match sample count")
    if test.count == 0:
        raise ValueError("test set is empty")

    train_labels = [str(label) for label in train_labels]
    dists = cdist(test.as_float64(), train.as_float64(), "euclidean")
    hits = 0
    row_index = np.arange(train.count)
    for i, truth in enumerate(test_labels):
        order = np.lexsort((row_index, dists[i]))[:k]
        votes: dict[str, list[float]] = {}
        for j in order:
            votes.setdefault(train_labels[j], []).append(float(dists[i, j]))
        best = min(
            votes.items(),
            key=lambda item: (-len(item[1]), float(np.mean(item[1])), item[0]),
        )[0]
        hits += best == str(truth)
    return hits / test.count
