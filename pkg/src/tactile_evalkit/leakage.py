"""Train/test leakage audits and video-grouped split construction.

Temporally adjacent frames from one touch recording are near-identical,
so a split that scatters frames of the same video across train and test
leaks. The audit reports three escalating signals: videos present on
both sides, the minimum cross-split frame gap per video, and cross-split
embedding pairs whose cosine similarity clears a threshold. The split
builder assigns whole videos to one side only, greedily balancing the
test fraction (optionally per class).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .store import EmbeddingSet, MetaRow, MetaTable

_NOLEAK_STREAM = 2**34  # keeps split shuffles out of the synth streams


@dataclass(frozen=True)
class LeakageReport:
    """What the audit found; leakage_rate is the fraction of test samples implicated."""

    video_overlap: tuple[dict, ...]
    min_frame_gap: dict
    near_duplicates: tuple[tuple[str, str, float], ...]
    leakage_rate: float
    train_count: int
    test_count: int
    tau: float | None


@dataclass(frozen=True)
class SplitAssignment:
    """Sample-id to split mapping produced by make_noleak_split."""

    assignment: Mapping[str, str]
    seed: int
    test_fraction_target: float
    stratify_key: str | None

    def achieved_test_fraction(self) -> float:
        if not self.assignment:
            return 0.0
        test = sum(1 for side in self.assignment.values() if side == "test")
        return test / len(self.assignment)


def _video_key(row: MetaRow) -> tuple[str, str]:
    # Rows without a video id can never overlap a split; treat each as
    # its own single-sample group.
    if row.video_id is not None:
        return ("video", row.video_id)
    return ("sample", row.sample_id)


def _group_by_video(meta: MetaTable) -> dict[tuple[str, str], list[MetaRow]]:
    groups: dict[tuple[str, str], list[MetaRow]] = {}
    for row in meta.rows:
        groups.setdefault(_video_key(row), []).append(row)
    return groups


def audit_split(meta: MetaTable, embeddings: EmbeddingSet | None = None, tau: float = 0.95) -> LeakageReport:
    """Audit an existing train/test tagging for leakage.

    Every sample must carry a split tag. When ``embeddings`` are given,
    all cross-split pairs with cosine similarity >= tau are reported
    (exhaustive scan; this tool favors completeness over speed).
    """
    untagged = [row.sample_id for row in meta.rows if row.split == "unassigned"]
    if untagged:
        raise ValueError(
            "%d untagged samples (first: %r); audit needs a full train/test tagging"
            % (len(untagged), untagged[0])
        )
    if embeddings is not None and not (0.0 < tau <= 1.0):
        raise ValueError("tau must be in (0, 1], got %r" % (tau,))

    train_rows = [row for row in meta.rows if row.split == "train"]
    test_rows = [row for row in meta.rows if row.split == "test"]

    overlap = []
    min_gap: dict[str, int | None] = {}
    implicated: set[str] = set()
    for key, rows in sorted(_group_by_video(meta).items()):
        tr = [r for r in rows if r.split == "train"]
        te = [r for r in rows if r.split == "test"]
        if not tr or not te:
            continue
        video_id = key[1]
        overlap.append(
            {"video_id": video_id, "train_count": len(tr), "test_count": len(te)}
        )
        implicated.update(r.sample_id for r in te)
        tr_frames = [r.frame_index for r in tr if r.frame_index is not None]
        te_frames = [r.frame_index for r in te if r.frame_index is not None]
        if tr_frames and te_frames:
            min_gap[video_id] = min(abs(a - b) for a in tr_frames for b in te_frames)
        else:
            min_gap[video_id] = None

    near = []
    if embeddings is not None:
        position = {sample_id: i for i, sample_id in enumerate(embeddings.ids)}
        missing = [r.sample_id for r in meta.rows if r.sample_id not in position]
        if missing:
            raise ValueError("sample %r has no embedding row" % missing[0])
        x = embeddings.as_float64()
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        unit = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
        tr_ids = [r.sample_id for r in train_rows]
        te_ids = [r.sample_id for r in test_rows]
        if tr_ids and te_ids:
            sims = unit[[position[i] for i in tr_ids]] @ unit[[position[i] for i in te_ids]].T
            hit_tr, hit_te = np.nonzero(sims >= tau)
            near = [
                (tr_ids[a], te_ids[b], float(sims[a, b]))
                for a, b in zip(hit_tr.tolist(), hit_te.tolist())
            ]
            near.sort(key=lambda item: (-item[2], item[0], item[1]))
            implicated.update(item[1] for item in near)

    rate = len(implicated) / len(test_rows) if test_rows else 0.0
    return LeakageReport(
        video_overlap=tuple(overlap),
        min_frame_gap=min_gap,
        near_duplicates=tuple(near),
        leakage_rate=rate,
        train_count=len(train_rows),
        test_count=len(test_rows),
        tau=tau if embeddings is not None else None,
    )


def make_noleak_split(
    meta: MetaTable,
    test_fraction: float,
    seed: int = 0,
    stratify_key: str | None = None,
) -> SplitAssignment:
    """Assign whole videos to train or test, chasing the target fraction.

    Videos are visited in a seeded-shuffled order; each goes to whichever
    side keeps the achieved test fraction (and, when stratifying by
    class, the per-class fractions) closest to the target in squared
    deviation. Ties go to train. Both sides always end up with at least
    one video. The result depends only on the seed and the metadata.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must be in (0, 1), got %r" % (test_fraction,))
    if stratify_key is not None and stratify_key != "class":
        raise ValueError("stratify_key must be None or 'class'")
    groups = _group_by_video(meta)
    if len(groups) < 2:
        raise ValueError("need at least 2 videos to split, got %d" % len(groups))
    total = len(meta)

    largest = max(len(rows) for rows in groups.values())
    if largest / total > max(test_fraction, 1.0 - test_fraction):
        warnings.warn(
            "one video holds %.1f%% of all samples; the target test fraction "
            "is unreachable" % (100.0 * largest / total),
            stacklevel=2,
        )

    class_totals: dict[str, int] = {}
    if stratify_key is not None:
        for row in meta.rows:
            if row.class_label is not None:
                class_totals[row.class_label] = class_totals.get(row.class_label, 0) + 1

    def class_counts(rows) -> dict[str, int]:
        counts: dict[str, int] = {}
        for row in rows:
            if row.class_label is not None and row.class_label in class_totals:
                counts[row.class_label] = counts.get(row.class_label, 0) + 1
        return counts

    def objective(test_total: int, class_test: dict[str, int]) -> float:
        value = (test_total / total - test_fraction) ** 2
        for label, class_total in class_totals.items():
            value += (class_test.get(label, 0) / class_total - test_fraction) ** 2
        return value

    keys = sorted(groups)
    rng = np.random.Generator(np.random.Philox(key=[seed, _NOLEAK_STREAM]))
    order = [keys[i] for i in rng.permutation(len(keys))]

    test_videos: set[tuple[str, str]] = set()
    test_total = 0
    class_test: dict[str, int] = {}
    for key in order:
        rows = groups[key]
        counts = class_counts(rows)
        with_video = dict(class_test)
        for label, c in counts.items():
            with_video[label] = with_video.get(label, 0) + c
        if objective(test_total + len(rows), with_video) < objective(test_total, class_test):
            test_videos.add(key)
            test_total += len(rows)
            class_test = with_video

    def move_best(into_test: bool):
        # One side came out empty; move the single video that best
        # approaches the target, preferring the smaller id on ties.
        best = None
        for key in keys:
            if (key in test_videos) == into_test:
                continue
            rows = groups[key]
            counts = class_counts(rows)
            if into_test:
                candidate_total = test_total + len(rows)
                candidate_classes = dict(class_test)
                for label, c in counts.items():
                    candidate_classes[label] = candidate_classes.get(label, 0) + c
            else:
                candidate_total = test_total - len(rows)
                candidate_classes = dict(class_test)
                for label, c in counts.items():
                    candidate_classes[label] = candidate_classes.get(label, 0) - c
            score = (objective(candidate_total, candidate_classes), key)
            if best is None or score < best[0]:
                best = (score, key, candidate_total, candidate_classes)
        assert best is not None
        _, key, new_total, new_classes = best
        if into_test:
            test_videos.add(key)
        else:
            test_videos.remove(key)
        return new_total, new_classes

    if not test_videos:
        test_total, class_test = move_best(into_test=True)
    elif len(test_videos) == len(keys):
        test_total, class_test = move_best(into_test=False)

    assignment = {
        row.sample_id: "test" if _video_key(row) in test_videos else "train"
        for row in meta.rows
    }
    return SplitAssignment(
        assignment=assignment,
        seed=seed,
        test_fraction_target=test_fraction,
        stratify_key=stratify_key,
    )


def split_to_lists(assignment: SplitAssignment) -> tuple[list[str], list[str]]:
    """Sorted (train_ids, test_ids); disjoint and jointly exhaustive."""
    train = sorted(i for i, side in assignment.assignment.items() if side == "train")
    test = sorted(i for i, side in assignment.assignment.items() if side == "test")
    return train, test


def write_split_lists(assignment: SplitAssignment, train_path, test_path) -> None:
    """Write plain-text id lists, one per line, sorted."""
    train, test = split_to_lists(assignment)
    for path, ids in ((train_path, train), (test_path, test)):
        with open(str(path), "w", encoding="utf-8") as fh:
            for sample_id in ids:
                fh.write(sample_id + "\n")


def load_split_list(path) -> list[str]:
    with open(str(path), "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def with_split(meta: MetaTable, assignment: Mapping[str, str]) -> MetaTable:
    """Copy of the table with split tags replaced from the mapping."""
    rows = []
    for row in meta.rows:
        side = assignment.get(row.sample_id, "unassigned")
        rows.append(
            MetaRow(
                sample_id=row.sample_id,
                video_id=row.video_id,
                frame_index=row.frame_index,
                class_label=row.class_label,
                split=side,
            )
        )
    return MetaTable(tuple(rows), source_path=meta.source_path, source_digest=meta.source_digest)
