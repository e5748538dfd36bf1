"""Distributional quality metrics for generated embedding sets.

Four related scores, all built on the unbiased squared MMD:

* tmmd: generated set against a reference set.
* i_tmmd: the generated set split into halves and compared against
  itself, averaged over split repeats. Sensitive to memorization-style
  artifacts that tmmd alone misses.
* ci_tmmd: i_tmmd per class, averaged over classes.
* d_tmmd: ratio of within-class divergence to total row divergence,
  averaged over classes. 1/C signals mode collapse, near 0 means classes
  are well separated and internally tight.

Bandwidths: tmmd resolves the median heuristic on the union of both
sets; the class metrics resolve it once on the full labeled set, never
per class, so per-class values stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mmd import MmdConfig, MmdValue, median_heuristic_sigma, mmd2_unbiased
from .report import MetricReport, gather_inputs
from .store import ClassPartition, EmbeddingSet, MetaTable

SPLIT_INTERLEAVE = "interleave"
SPLIT_RANDOM = "random"

# Fewest samples a class needs before split halves are meaningful
# (two halves of at least two points each).
MIN_CLASS_SIZE = 4


class IndeterminateDiversityError(ValueError):
    """A divergence row clamps to all zeros, so its ratio is undefined."""


@dataclass(frozen=True)
class SplitStrategy:
    """How to cut a set into two halves.

    ``interleave`` sorts by sample id and alternates rows (first, third,
    ... into the first half), giving one deterministic pair; ``random``
    draws ``repeats`` independent half-splits from a counter-based
    generator keyed by (seed, repeat index), so the outcome depends only
    on those two numbers and the ids, never on input row order.
    """

    mode: str = SPLIT_RANDOM
    seed: int = 0
    repeats: int = 5

    def __post_init__(self):
        if self.mode not in (SPLIT_INTERLEAVE, SPLIT_RANDOM):
            raise ValueError("split mode must be interleave or random, got %r" % (self.mode,))
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not isinstance(self.repeats, int) or self.repeats < 1:
            raise ValueError("repeats must be a positive integer")

    def describe(self) -> dict:
        if self.mode == SPLIT_INTERLEAVE:
            return {"mode": self.mode, "seed": None, "repeats": 1}
        return {"mode": self.mode, "seed": self.seed, "repeats": self.repeats}


def split_halves(ids: Sequence[str], strategy: SplitStrategy) -> list[tuple[np.ndarray, np.ndarray]]:
    """Positional index pairs (half1, half2) for the given sample ids.

    Ids are canonicalized by sorting, so membership is independent of row
    order. With an odd count the first half gets the extra row. Each half
    comes back in id order.
    """
    n = len(ids)
    if n < 4:
        raise ValueError("need at least 4 samples to split, got %d" % n)
    order = np.argsort(np.asarray(ids, dtype=object), kind="stable")
    if strategy.mode == SPLIT_INTERLEAVE:
        return [(order[0::2], order[1::2])]
    half = (n + 1) // 2
    pairs = []
    for rep in range(strategy.repeats):
        rng = np.random.Generator(np.random.Philox(key=[strategy.seed, rep]))
        perm = rng.permutation(n)
        pairs.append((order[np.sort(perm[:half])], order[np.sort(perm[half:])]))
    return pairs


def _split_mean(x: np.ndarray, ids: Sequence[str], sigma: float, strategy: SplitStrategy) -> tuple[float, list[float]]:
    values = []
    cfg = MmdConfig(sigma=sigma)
    for idx1, idx2 in split_halves(ids, strategy):
        values.append(mmd2_unbiased(x[idx1], x[idx2], cfg).value)
    return float(np.mean(values)), values


def tmmd(generated: EmbeddingSet, reference: EmbeddingSet, cfg: MmdConfig = MmdConfig()) -> MetricReport:
    """Unbiased squared MMD between generated and reference sets."""
    return _two_set_report("tmmd", generated, reference, cfg)


def _two_set_report(name: str, generated: EmbeddingSet, reference: EmbeddingSet, cfg: MmdConfig) -> MetricReport:
    result: MmdValue = mmd2_unbiased(generated.as_float64(), reference.as_float64(), cfg)
    return MetricReport(
        metric=name,
        value=result.value,
        sigma=result.sigma,
        sigma_policy=cfg.sigma_policy,
        inputs=gather_inputs(generated, reference),
        extra={"m": result.m, "n": result.n},
    )


def i_tmmd(
    generated: EmbeddingSet,
    cfg: MmdConfig = MmdConfig(),
    strategy: SplitStrategy = SplitStrategy(),
) -> MetricReport:
    """Mean split-half MMD of a set against itself.

    The bandwidth is resolved once on the full set, then reused for every
    split pair, so repeats measure sampling variation only.
    """
    if generated.count < 4:
        raise ValueError("i-tmmd needs at least 4 samples, got %d" % generated.count)
    x = generated.as_float64()
    sigma = cfg.sigma if cfg.sigma is not None else median_heuristic_sigma(x)
    value, values = _split_mean(x, generated.ids, sigma, strategy)
    return MetricReport(
        metric="i-tmmd",
        value=value,
        sigma=sigma,
        sigma_policy=cfg.sigma_policy,
        split=strategy.describe(),
        inputs=gather_inputs(generated),
        extra={"split_values": values},
    )


def _labeled_sigma(x: np.ndarray, partition: ClassPartition, cfg: MmdConfig) -> float:
    if cfg.sigma is not None:
        return cfg.sigma
    # One bandwidth for the whole labeled set keeps classes comparable.
    rows = np.concatenate([partition.indices[c] for c in partition.classes])
    return median_heuristic_sigma(x[rows])


def _usable_classes(partition: ClassPartition) -> tuple[list[str], list[str]]:
    usable = [c for c in partition.classes if partition.indices[c].size >= MIN_CLASS_SIZE]
    skipped = [c for c in partition.classes if partition.indices[c].size < MIN_CLASS_SIZE]
    return usable, skipped


def ci_tmmd(
    generated: EmbeddingSet,
    partition: ClassPartition,
    cfg: MmdConfig = MmdConfig(),
    strategy: SplitStrategy = SplitStrategy(),
    meta: MetaTable | None = None,
) -> MetricReport:
    """Class-conditional i_tmmd: split-half MMD per class, averaged.

    Classes with fewer than 4 samples cannot be split and are skipped
    (listed in the report) rather than failing the run.
    """
    if not partition.classes:
        raise ValueError("no labeled classes")
    usable, skipped = _usable_classes(partition)
    if not usable:
        raise ValueError("no class has >= %d samples" % MIN_CLASS_SIZE)
    x = generated.as_float64()
    sigma = _labeled_sigma(x, partition, cfg)
    per_class = {}
    for label in usable:
        idx = partition.indices[label]
        ids = [generated.ids[i] for i in idx]
        per_class[label], _ = _split_mean(x[idx], ids, sigma, strategy)
    value = float(np.mean([per_class[label] for label in usable]))
    return MetricReport(
        metric="ci-tmmd",
        value=value,
        sigma=sigma,
        sigma_policy=cfg.sigma_policy,
        split=strategy.describe(),
        classes=list(usable),
        per_class=per_class,
        skipped=skipped,
        inputs=gather_inputs(generated, meta),
    )


@dataclass(frozen=True)
class DivergenceMatrix:
    """Pairwise class divergences: split-half MMD on the diagonal,
    set-to-set MMD off it. Symmetric by construction."""

    classes: tuple[str, ...]
    values: np.ndarray  # (C, C) float64
    sigma: float

    def clamped(self) -> np.ndarray:
        return np.maximum(self.values, 0.0)


def divergence_matrix(
    generated: EmbeddingSet,
    partition: ClassPartition,
    cfg: MmdConfig = MmdConfig(),
    strategy: SplitStrategy = SplitStrategy(),
) -> DivergenceMatrix:
    """Full class-by-class divergence table. Every class needs >= 4 samples."""
    classes = partition.classes
    if not classes:
        raise ValueError("no labeled classes")
    for label in classes:
        if partition.indices[label].size < MIN_CLASS_SIZE:
            raise ValueError(
                "class %r has %d samples; need >= %d"
                % (label, partition.indices[label].size, MIN_CLASS_SIZE)
            )
    x = generated.as_float64()
    sigma = _labeled_sigma(x, partition, cfg)
    cfg_fixed = MmdConfig(sigma=sigma)
    c = len(classes)
    values = np.zeros((c, c), dtype=np.float64)
    for i, label in enumerate(classes):
        idx = partition.indices[label]
        ids = [generated.ids[k] for k in idx]
        values[i, i], _ = _split_mean(x[idx], ids, sigma, strategy)
    for i in range(c):
        for j in range(i + 1, c):
            a = x[partition.indices[classes[i]]]
            b = x[partition.indices[classes[j]]]
            v = mmd2_unbiased(a, b, cfg_fixed).value
            values[i, j] = v
            values[j, i] = v  # estimator is symmetric; mirror exactly
    return DivergenceMatrix(classes=classes, values=values, sigma=sigma)


def aggregate_diversity(classes: Sequence[str], matrix: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of diag/row-sum ratios over the clamped divergence matrix.

    Negative estimates are clamped to zero only here. A row whose clamped
    sum is zero has no defined ratio and raises, naming the class.
    """
    clamped = np.maximum(np.asarray(matrix, dtype=np.float64), 0.0)
    row_sums = clamped.sum(axis=1)
    for label, total in zip(classes, row_sums):
        if total == 0.0:
            raise IndeterminateDiversityError(
                "class %r: every divergence in its row clamps to zero, "
                "diversity is indeterminate" % label
            )
    ratios = clamped.diagonal() / row_sums
    return float(np.mean(ratios)), ratios


def d_tmmd(
    generated: EmbeddingSet,
    partition: ClassPartition,
    cfg: MmdConfig = MmdConfig(),
    strategy: SplitStrategy = SplitStrategy(),
    meta: MetaTable | None = None,
) -> MetricReport:
    """Diversity score in [0, 1]: how much of each class's divergence row
    sits on the diagonal. Classes under 4 samples are skipped."""
    usable, skipped = _usable_classes(partition)
    if not usable:
        raise ValueError("no class has >= %d samples" % MIN_CLASS_SIZE)
    sub = ClassPartition(tuple(usable), {c: partition.indices[c] for c in usable})
    dm = divergence_matrix(generated, sub, cfg, strategy)
    value, ratios = aggregate_diversity(dm.classes, dm.values)
    return MetricReport(
        metric="d-tmmd",
        value=value,
        sigma=dm.sigma,
        sigma_policy=cfg.sigma_policy,
        split=strategy.describe(),
        classes=list(dm.classes),
        per_class={label: float(r) for label, r in zip(dm.classes, ratios)},
        skipped=skipped,
        inputs=gather_inputs(generated, meta),
        extra={
            "divergence": dm.values,
            "divergence_clamped": dm.clamped(),
            "row_sums": dm.clamped().sum(axis=1),
        },
    )
