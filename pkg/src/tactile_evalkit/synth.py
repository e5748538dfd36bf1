"""Synthetic video-structured embeddings for fast sanity studies.

Every sample belongs to a video; frames inside a video follow a
stationary AR(1) chain around the class mean, which mimics how slowly a
touch recording drifts. That temporal redundancy is exactly what makes
frame-level splits leak, so the same generator powers a small study that
contrasts a frame-interleaved split with a video-grouped one.

All draws come from counter-based streams (one per video), so output is
bit-identical for a given spec regardless of platform thread counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .baselines import knn_probe, retrieval_topk
from .leakage import make_noleak_split, with_split
from .metrics import tmmd
from .mmd import MmdConfig
from .report import MetricReport, gather_inputs
from .store import EmbeddingSet, MetaRow, MetaTable

SCENARIO_CLEAN = "clean"
SCENARIO_COLLAPSE = "collapse"
SCENARIO_LEAKAGE = "leakage"
_SCENARIOS = (SCENARIO_CLEAN, SCENARIO_COLLAPSE, SCENARIO_LEAKAGE)

# Philox stream ids above any realistic video count.
_GENERATOR_STREAM = 2**32
_MEMORIZE_STREAM = 2**33

# Frame period used to tag the deliberately leaky scenario.
_LEAK_PERIOD = 5


@dataclass(frozen=True)
class ScenarioSpec:
    """Shape and statistics of one synthetic dataset."""

    scenario: str = SCENARIO_CLEAN
    classes: int = 5
    videos_per_class: int = 8
    frames_per_video: int = 30
    dim: int = 16
    intra_video_corr: float = 0.97
    class_separation: float = 3.0
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in _SCENARIOS:
            raise ValueError("scenario must be one of %s" % (_SCENARIOS,))
        if self.classes < 1 or self.videos_per_class < 1 or self.frames_per_video < 1:
            raise ValueError("classes, videos_per_class and frames_per_video must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not (0.0 <= self.intra_video_corr < 1.0):
            raise ValueError("intra_video_corr must be in [0, 1)")
        if self.class_separation < 0.0 or self.noise_scale <= 0.0:
            raise ValueError("class_separation must be >= 0 and noise_scale > 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.scenario != SCENARIO_COLLAPSE and self.classes > self.dim:
            raise ValueError(
                "separated scenarios place one class per axis; need classes <= dim"
            )
        if self.classes * self.videos_per_class > 9999 or self.frames_per_video > 9999:
            raise ValueError("scenario too large for fixed-width ids")


@dataclass(frozen=True)
class ScenarioOutput:
    embeddings: EmbeddingSet
    meta: MetaTable
    generator_outputs: EmbeddingSet


def _class_means(spec: ScenarioSpec) -> np.ndarray:
    means = np.zeros((spec.classes, spec.dim), dtype=np.float64)
    if spec.scenario != SCENARIO_COLLAPSE:
        for c in range(spec.classes):
            means[c, c] = spec.class_separation
    return means


def generate_scenario(spec: ScenarioSpec) -> ScenarioOutput:
    """Produce embeddings, metadata, and a memorizing generator's outputs.

    Frames of video v in class c are mu_c + u_t with u_0 ~ N(0, s^2 I)
    and u_{t+1} = rho u_t + sqrt(1 - rho^2) eps, eps ~ N(0, s^2 I); the
    chain is stationary, so every frame is marginally N(mu_c, s^2 I)
    while neighboring frames stay within a fraction of the noise scale
    of each other. The leakage scenario additionally tags a
    frame-interleaved split (every %dth frame to test) for audit demos.
    """ % _LEAK_PERIOD
    means = _class_means(spec)
    label_width = max(2, len(str(spec.classes - 1)))
    rho = spec.intra_video_corr
    innovation = math.sqrt(1.0 - rho * rho)

    rows: list[np.ndarray] = []
    ids: list[str] = []
    meta_rows: list[MetaRow] = []
    video = 0
    for c in range(spec.classes):
        label = "mat%0*d" % (label_width, c)
        for _ in range(spec.videos_per_class):
            video_id = "v%04d" % video
            rng = np.random.Generator(np.random.Philox(key=[spec.seed, video]))
            draws = rng.standard_normal((spec.frames_per_video, spec.dim)) * spec.noise_scale
            dev = np.empty_like(draws)
            dev[0] = draws[0]
            for t in range(1, spec.frames_per_video):
                dev[t] = rho * dev[t - 1] + innovation * draws[t]
            rows.append(means[c] + dev)
            for t in range(spec.frames_per_video):
                sample_id = "%s_f%04d" % (video_id, t)
                ids.append(sample_id)
                split = "unassigned"
                if spec.scenario == SCENARIO_LEAKAGE:
                    split = "test" if t % _LEAK_PERIOD == 0 else "train"
                meta_rows.append(
                    MetaRow(
                        sample_id=sample_id,
                        video_id=video_id,
                        frame_index=t,
                        class_label=label,
                        split=split,
                    )
                )
            video += 1

    embeddings = EmbeddingSet(np.vstack(rows), tuple(ids))
    meta = MetaTable(tuple(meta_rows))
    generated = memorizing_generator(
        embeddings, embeddings, noise=0.05 * spec.noise_scale, seed=spec.seed
    )
    return ScenarioOutput(embeddings=embeddings, meta=meta, generator_outputs=generated)


def memorizing_generator(
    train: EmbeddingSet, probe: EmbeddingSet, noise: float, seed: int
) -> EmbeddingSet:
    """The worst honest generator: nearest training row plus Gaussian noise.

    With noise zero and probes drawn from the training set it returns the
    probes exactly, which is the degenerate memorization case the split
    study exploits.
    """
    if train.count < 1:
        raise ValueError("training set is empty")
    if train.dim != probe.dim:
        raise ValueError("dimension mismatch: %d vs %d" % (train.dim, probe.dim))
    if noise < 0.0:
        raise ValueError("noise must be >= 0")
    dists = cdist(probe.as_float64(), train.as_float64(), "sqeuclidean")
    nearest = np.argmin(dists, axis=1)  # ties resolve to the lowest row
    base = train.data[nearest].astype(np.float64)
    if noise > 0.0:
        rng = np.random.Generator(np.random.Philox(key=[seed, _MEMORIZE_STREAM]))
        base = base + noise * rng.standard_normal(base.shape)
    return EmbeddingSet(base, probe.ids)


def _frame_interleaved_split(meta: MetaTable, test_fraction: float) -> dict[str, str]:
    period = max(2, round(1.0 / test_fraction))
    out = {}
    for row in meta.rows:
        frame = row.frame_index if row.frame_index is not None else 0
        out[row.sample_id] = "test" if frame % period == 0 else "train"
    return out


def _split_scores(
    output: ScenarioOutput, assignment: dict[str, str], mem_noise: float, seed: int, k: int
) -> dict:
    e = output.embeddings
    labels = {row.sample_id: row.class_label for row in output.meta.rows}
    train_idx = [i for i, sid in enumerate(e.ids) if assignment[sid] == "train"]
    test_idx = [i for i, sid in enumerate(e.ids) if assignment[sid] == "test"]
    train = e.take(train_idx)
    test = e.take(test_idx)

    accuracy = knn_probe(
        train,
        [labels[sid] for sid in train.ids],
        test,
        [labels[sid] for sid in test.ids],
        k=k,
    )
    generated = memorizing_generator(train, test, noise=mem_noise, seed=seed)
    retrieval = retrieval_topk(generated, test, {sid: sid for sid in test.ids}, ks=(1, 5))
    mmd_report = tmmd(generated, test)
    return {
        "train_size": train.count,
        "test_size": test.count,
        "knn_accuracy": accuracy,
        "top1": retrieval.top1,
        "top5": retrieval.top5,
        "tmmd": mmd_report.value,
        "tmmd_sigma": mmd_report.sigma,
    }


def run_leak_study(spec: ScenarioSpec, test_fraction: float = 0.2, seed: int | None = None) -> MetricReport:
    """Same data, two splits: frame-interleaved versus video-grouped.

    Reports k-NN probe accuracy, identity retrieval of the memorizing
    generator's outputs, and the generator-versus-test MMD under both
    splits, plus the leaked-minus-grouped deltas. A seed here overrides
    the spec's. Needs a strongly correlated scenario
    (intra_video_corr >= 0.9) to be meaningful.
    """
    if spec.intra_video_corr < 0.9:
        raise ValueError(
            "leak study needs intra_video_corr >= 0.9, got %g" % spec.intra_video_corr
        )
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must be in (0, 1)")
    spec_used = spec if seed is None else replace(spec, seed=seed)
    output = generate_scenario(spec_used)

    leaked = _frame_interleaved_split(output.meta, test_fraction)
    grouped = make_noleak_split(
        output.meta, test_fraction, seed=spec_used.seed, stratify_key="class"
    ).assignment

    mem_noise = 0.05 * spec.noise_scale
    min_train = min(
        sum(1 for side in leaked.values() if side == "train"),
        sum(1 for side in grouped.values() if side == "train"),
    )
    k = 5 if min_train >= 5 else (3 if min_train >= 3 else 1)
    leaked_scores = _split_scores(output, leaked, mem_noise, spec_used.seed, k)
    grouped_scores = _split_scores(output, grouped, mem_noise, spec_used.seed, k)
    deltas = {
        key: leaked_scores[key] - grouped_scores[key]
        for key in ("knn_accuracy", "top1", "top5", "tmmd")
    }
    return MetricReport(
        metric="leak-study",
        value=deltas["knn_accuracy"],
        inputs=gather_inputs(),
        extra={
            "scenario": spec_used.scenario,
            "seed": spec_used.seed,
            "test_fraction": test_fraction,
            "knn_k": k,
            "leaked": leaked_scores,
            "noleak": grouped_scores,
            "deltas": deltas,
        },
    )
