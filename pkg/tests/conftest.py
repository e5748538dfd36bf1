"""Shared builders for the test suite."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from tactile_evalkit.store import EmbeddingSet, MetaRow, MetaTable, write_embeddings, write_meta


def make_set(rows, ids=None) -> EmbeddingSet:
    data = np.asarray(rows, dtype=np.float32)
    if data.ndim == 1:
        data = data[:, None]
    if ids is None:
        ids = tuple("s%03d" % i for i in range(data.shape[0]))
    return EmbeddingSet(data=data, ids=tuple(ids))


def labeled_rows(labels, ids) -> MetaTable:
    rows = tuple(
        MetaRow(sample_id=sid, class_label=lab) for sid, lab in zip(ids, labels)
    )
    return MetaTable(rows=rows)


def run_cli(args, cwd=None, env_extra=None) -> subprocess.CompletedProcess:
    env = dict(os.environ)
    env.pop("TACTILE_EVALKIT_THREADS", None)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "tactile_evalkit", *args],
        capture_output=True,
        cwd=cwd,
        env=env,
    )


@pytest.fixture
def two_cluster_set() -> EmbeddingSet:
    # two tight one-dimensional clusters; handy for split fixtures
    return make_set([[0.0], [0.0], [2.0], [2.0]], ids=("a", "b", "c", "d"))


@pytest.fixture
def cli_fixtures(tmp_path):
    """A small on-disk dataset every CLI command can run against."""
    rng = np.random.Generator(np.random.Philox(key=[99, 0]))
    d = 6
    labels = []
    ids = []
    rows = []
    vecs = []
    for c, label in enumerate(("felt", "foam", "metal")):
        for v in range(3):
            vid = "%s_v%d" % (label, v)
            for f in range(8):
                sid = "%s_f%02d" % (vid, f)
                ids.append(sid)
                labels.append(label)
                base = np.zeros(d)
                base[c] = 3.0
                vecs.append(base + rng.normal(0.0, 1.0, size=d))
                rows.append(
                    MetaRow(
                        sample_id=sid,
                        video_id=vid,
                        frame_index=f,
                        class_label=label,
                        split="test" if f % 4 == 0 else "train",
                    )
                )
    emb = EmbeddingSet(data=np.asarray(vecs, dtype=np.float32), ids=tuple(ids))
    ref = EmbeddingSet(
        data=(np.asarray(vecs, dtype=np.float64) + rng.normal(0.0, 0.3, size=(len(ids), d))).astype(np.float32),
        ids=tuple("ref_" + sid for sid in ids),
    )
    paths = {
        "generated": str(tmp_path / "generated.temb"),
        "reference": str(tmp_path / "reference.temb"),
        "meta": str(tmp_path / "meta.jsonl"),
        "dir": tmp_path,
    }
    write_embeddings(emb, paths["generated"])
    write_embeddings(ref, paths["reference"])
    write_meta(MetaTable(rows=tuple(rows)), paths["meta"])
    return paths
