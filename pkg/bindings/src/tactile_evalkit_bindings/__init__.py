"""In-memory bindings for the tactile-evalkit metric and audit suite.

Training pipelines already hold embeddings as arrays; writing them to
.temb containers just to score them is wasted motion. Each function here
accepts plain buffers (anything numpy reads as an (n, d) matrix of
reals), quantizes them to float32 at the boundary exactly as the file
loaders do, delegates to the core package, and returns the report as a
plain dict: the same mapping the command line prints as JSON. Because
the data never touched disk, the report's "inputs" map is empty; every
other key is byte-for-byte what the CLI would emit for the same rows.

Input buffers are copied once at the boundary and never written to. The
module keeps no state, so concurrent calls from multiple threads are
safe.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

import tactile_evalkit as core

__version__ = "0.1.0"  # pinned to the core package

__all__ = ["tmmd", "embedding_mmd", "itmmd", "citmmd", "dtmmd", "audit"]


def _as_set(values, ids, name: str) -> core.EmbeddingSet:
    """Boundary copy: validate, quantize to float32, leave the caller's
    buffer untouched."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError("%s must be a 2-D (n, d) array, got shape %r" % (name, arr.shape))
    if not (np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.integer)):
        raise ValueError("%s must hold real numbers, got dtype %s" % (name, arr.dtype))
    if ids is None:
        # zero-padded so id order is row order for the split metrics
        ids = ("%06d" % i for i in range(arr.shape[0]))
    return core.EmbeddingSet(arr, tuple(str(i) for i in ids))


def _strategy(mode: str, seed: int, repeats: int) -> core.SplitStrategy:
    return core.SplitStrategy(mode=mode, seed=seed, repeats=repeats)


def tmmd(generated, reference, *, generated_ids=None, reference_ids=None, sigma=None) -> dict:
    """Unbiased squared MMD between two embedding arrays.

    Rows are quantized to float32 first, so the result is bit-identical
    to ``metrics tmmd`` run on the same data written to disk. With
    ``sigma=None`` the bandwidth is the median heuristic on the union of
    both sets. The score sits under ``"value"`` in the returned mapping.
    """
    g = _as_set(generated, generated_ids, "generated")
    r = _as_set(reference, reference_ids, "reference")
    return core.tmmd(g, r, core.MmdConfig(sigma=sigma)).as_dict()


def embedding_mmd(generated, reference, *, generated_ids=None, reference_ids=None, sigma=None) -> dict:
    g = _as_set(generated, generated_ids, "generated")
    r = _as_set(reference, reference_ids, "reference")
    return core.embedding_mmd(g, r, core.MmdConfig(sigma=sigma)).as_dict()


def itmmd(generated, *, ids=None, sigma=None, mode="random", seed=0, repeats=5) -> dict:
    """Split-half MMD of one array against itself.

    Ids drive the split canonicalization; pass the real sample ids when
    you have them, otherwise rows are numbered in order.
    """
    g = _as_set(generated, ids, "generated")
    return core.i_tmmd(g, core.MmdConfig(sigma=sigma), _strategy(mode, seed, repeats)).as_dict()


def citmmd(generated, labels, *, ids=None, sigma=None, mode="random", seed=0, repeats=5) -> dict:
    """Per-class split-half MMD, averaged over classes.

    ``labels`` is one class label per row; None marks an unlabeled row,
    which is left out, the same way a metadata file without a class field
    would leave it out.
    """
    g, partition, meta = _labeled(generated, labels, ids)
    return core.ci_tmmd(
        g, partition, core.MmdConfig(sigma=sigma), _strategy(mode, seed, repeats), meta=meta
    ).as_dict()


def dtmmd(generated, labels, *, ids=None, sigma=None, mode="random", seed=0, repeats=5) -> dict:
    """Class diversity score; see ``citmmd`` for the labels convention."""
    g, partition, meta = _labeled(generated, labels, ids)
    return core.d_tmmd(
        g, partition, core.MmdConfig(sigma=sigma), _strategy(mode, seed, repeats), meta=meta
    ).as_dict()


def audit(records, embeddings=None, *, embedding_ids=None, tau=0.95) -> dict:
    """Leakage audit of an existing train/test tagging.

    ``records`` follow the metadata file schema: mappings with sample_id
    and optional video_id, frame_index, class, split. When ``embeddings``
    are given the near-duplicate scan runs too; ``embedding_ids`` default
    to the record sample_ids in order, for pipelines whose rows parallel
    their metadata.
    """
    meta = _meta_table(records)
    emb = None
    if embeddings is not None:
        if embedding_ids is None:
            embedding_ids = [row.sample_id for row in meta.rows]
        emb = _as_set(embeddings, embedding_ids, "embeddings")
    result = core.audit_split(meta, emb, tau=tau)
    report = core.MetricReport(
        metric="leakage-audit",
        value=result.leakage_rate,
        extra={
            "video_overlap": list(result.video_overlap),
            "min_frame_gap": result.min_frame_gap,
            "near_duplicates": [list(item) for item in result.near_duplicates],
            "train_count": result.train_count,
            "test_count": result.test_count,
            "tau": result.tau,
        },
    )
    return report.as_dict()


def _labeled(generated, labels, ids):
    g = _as_set(generated, ids, "generated")
    labels = list(labels)
    if len(labels) != g.count:
        raise ValueError("labels: expected %d entries, got %d" % (g.count, len(labels)))
    rows = tuple(
        core.MetaRow(sample_id=sid, class_label=None if label is None else str(label))
        for sid, label in zip(g.ids, labels)
    )
    meta = core.MetaTable(rows)
    return g, core.partition_by_class(g, meta), meta


def _meta_table(records) -> core.MetaTable:
    rows = []
    for i, record in enumerate(records):
        if not isinstance(record, Mapping) or "sample_id" not in record:
            raise ValueError("records[%d]: expected a mapping with a sample_id" % i)
        rows.append(
            core.MetaRow(
                sample_id=record["sample_id"],
                video_id=record.get("video_id"),
                frame_index=record.get("frame_index"),
                class_label=record.get("class"),
                split=record.get("split", "unassigned"),
            )
        )
    return core.MetaTable(tuple(rows))
