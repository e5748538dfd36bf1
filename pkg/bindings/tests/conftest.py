"""Shared corpus for the parity tests.

One synthetic three-class recording set is generated once, kept as the
raw float64 arrays handed to the bindings, and written to .temb/.jsonl
files for the CLI side. Both sides therefore see identical rows after
float32 quantization.
"""

import json
import os
import subprocess
import sys
from dataclasses import dataclass

import numpy as np
import pytest

import tactile_evalkit as core


def run_cli(args, cwd=None):
    env = dict(os.environ)
    env.pop("TACTILE_EVALKIT_THREADS", None)
    return subprocess.run(
        [sys.executable, "-m", "tactile_evalkit", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        env=env,
    )


def cli_json(args) -> dict:
    proc = run_cli(args)
    assert proc.returncode == 0, proc.stderr
    assert proc.stderr == ""
    return json.loads(proc.stdout)


@dataclass(frozen=True)
class Corpus:
    generated: np.ndarray  # float64, exactly what the bindings receive
    reference: np.ndarray
    ids: tuple
    labels: tuple
    records: tuple  # metadata mappings, one per generated row
    generated_path: str
    reference_path: str
    meta_path: str


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> Corpus:
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.Generator(np.random.Philox(key=[41, 0]))
    dim = 7
    ids, labels, records, rows = [], [], [], []
    for c, label in enumerate(("canvas", "cork", "rubber")):
        mean = np.zeros(dim)
        mean[c] = 2.5
        for v in range(3):
            for t in range(8):
                ids.append("%s_v%d_f%d" % (label, v, t))
                labels.append(label)
                records.append(
                    {
                        "sample_id": ids[-1],
                        "video_id": "%s_v%d" % (label, v),
                        "frame_index": t,
                        "class": label,
                        "split": "test" if t % 4 == 0 else "train",
                    }
                )
                rows.append(mean + rng.normal(size=dim))
    generated = np.asarray(rows, dtype=np.float64)
    reference = generated + 0.05 * rng.normal(size=generated.shape)

    generated_path = str(root / "generated.temb")
    reference_path = str(root / "reference.temb")
    meta_path = str(root / "meta.jsonl")
    core.write_embeddings(core.EmbeddingSet(generated, tuple(ids)), generated_path)
    core.write_embeddings(core.EmbeddingSet(reference, tuple(ids)), reference_path)
    core.write_meta(
        core.MetaTable(
            tuple(
                core.MetaRow(
                    sample_id=r["sample_id"],
                    video_id=r["video_id"],
                    frame_index=r["frame_index"],
                    class_label=r["class"],
                    split=r["split"],
                )
                for r in records
            )
        ),
        meta_path,
    )
    return Corpus(
        generated=generated,
        reference=reference,
        ids=tuple(ids),
        labels=tuple(labels),
        records=tuple(records),
        generated_path=generated_path,
        reference_path=reference_path,
        meta_path=meta_path,
    )
