"""Synthetic scenario generator and the frame-leak study built on it."""

from __future__ import annotations

import numpy as np
import pytest

from tactile_evalkit.synth import (
    ScenarioSpec,
    generate_scenario,
    memorizing_generator,
    run_leak_study,
)

from conftest import make_set


def _lag1_corr(series: np.ndarray) -> float:
    a, b = series[:-1], series[1:]
    a = a - a.mean()
    b = b - b.mean()
    return float(np.sum(a * b) / np.sqrt(np.sum(a * a) * np.sum(b * b)))


def test_generation_is_bit_exact():
    spec = ScenarioSpec(scenario="clean", seed=4)
    a = generate_scenario(spec)
    b = generate_scenario(spec)
    assert a.embeddings.ids == b.embeddings.ids
    assert np.array_equal(a.embeddings.data, b.embeddings.data)
    assert np.array_equal(a.generator_outputs.data, b.generator_outputs.data)
    assert a.meta.rows == b.meta.rows


def test_seed_changes_the_data():
    a = generate_scenario(ScenarioSpec(seed=0))
    b = generate_scenario(ScenarioSpec(seed=1))
    assert not np.array_equal(a.embeddings.data, b.embeddings.data)
    assert a.embeddings.ids == b.embeddings.ids  # shape is seed-free


def test_ids_and_meta_layout():
    spec = ScenarioSpec(classes=2, videos_per_class=2, frames_per_video=3, dim=4, seed=0)
    out = generate_scenario(spec)
    assert out.embeddings.count == 12 and out.embeddings.dim == 4
    assert out.embeddings.ids[0] == "v0000_f0000"
    assert out.embeddings.ids[-1] == "v0003_f0002"
    row = out.meta.get("v0002_f0001")
    assert row.video_id == "v0002" and row.frame_index == 1
    assert row.class_label == "mat01"
    assert out.generator_outputs.ids == out.embeddings.ids


def test_chain_is_stationary_with_requested_correlation():
    spec = ScenarioSpec(
        scenario="clean", classes=1, videos_per_class=1, frames_per_video=4000,
        dim=1, intra_video_corr=0.9, class_separation=0.0, seed=2,
    )
    series = generate_scenario(spec).embeddings.as_float64()[:, 0]
    assert _lag1_corr(series) == pytest.approx(0.9, abs=0.03)
    assert float(series.std()) == pytest.approx(1.0, abs=0.08)


def test_zero_correlation_gives_independent_frames():
    spec = ScenarioSpec(
        scenario="clean", classes=1, videos_per_class=1, frames_per_video=4000,
        dim=1, intra_video_corr=0.0, class_separation=0.0, seed=2,
    )
    series = generate_scenario(spec).embeddings.as_float64()[:, 0]
    assert abs(_lag1_corr(series)) < 0.05


def test_clean_classes_sit_on_separate_axes():
    spec = ScenarioSpec(scenario="clean", intra_video_corr=0.0, seed=3)
    out = generate_scenario(spec)
    x = out.embeddings.as_float64()
    for c in range(spec.classes):
        label = "mat0%d" % c
        idx = [i for i, sid in enumerate(out.embeddings.ids) if out.meta.get(sid).class_label == label]
        center = x[idx].mean(axis=0)
        want = np.zeros(spec.dim)
        want[c] = spec.class_separation
        assert center == pytest.approx(want, abs=0.3)


def test_collapse_classes_share_one_distribution():
    spec = ScenarioSpec(scenario="collapse", intra_video_corr=0.0, seed=3)
    out = generate_scenario(spec)
    center = out.embeddings.as_float64().mean(axis=0)
    assert center == pytest.approx(np.zeros(spec.dim), abs=0.15)


def test_collapse_allows_more_classes_than_dims():
    spec = ScenarioSpec(scenario="collapse", classes=5, dim=2, videos_per_class=1)
    assert generate_scenario(spec).embeddings.dim == 2
    with pytest.raises(ValueError):
        ScenarioSpec(scenario="clean", classes=5, dim=2)


def test_leakage_scenario_tags_every_fifth_frame():
    spec = ScenarioSpec(scenario="leakage", classes=1, videos_per_class=2,
                        frames_per_video=10, dim=2, seed=0)
    out = generate_scenario(spec)
    for row in out.meta.rows:
        want = "test" if row.frame_index % 5 == 0 else "train"
        assert row.split == want


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(scenario="chaos")
    with pytest.raises(ValueError):
        ScenarioSpec(intra_video_corr=1.0)
    with pytest.raises(ValueError):
        ScenarioSpec(intra_video_corr=-0.1)
    with pytest.raises(ValueError):
        ScenarioSpec(noise_scale=0.0)
    with pytest.raises(ValueError):
        ScenarioSpec(seed=-1)
    with pytest.raises(ValueError):
        ScenarioSpec(frames_per_video=10000)


def test_memorizer_returns_exact_rows_at_zero_noise():
    train = make_set([[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]], ids=("a", "b", "c"))
    probe = make_set([[5.1, 4.9], [0.2, -0.1]], ids=("p", "q"))
    out = memorizing_generator(train, probe, noise=0.0, seed=0)
    assert out.ids == ("p", "q")
    assert out.data.tolist() == [[5.0, 5.0], [0.0, 0.0]]
    # probing with the training set itself reproduces it bit for bit
    echo = memorizing_generator(train, train, noise=0.0, seed=0)
    assert np.array_equal(echo.data, train.data)


def test_memorizer_noise_stays_near_the_source():
    train = make_set(np.eye(4) * 10.0, ids=("a", "b", "c", "d"))
    out = memorizing_generator(train, train, noise=0.01, seed=7)
    dev = out.as_float64() - train.as_float64()
    assert np.abs(dev).max() < 0.01 * 6.0
    assert np.abs(dev).max() > 0.0


def test_memorizer_validation():
    train = make_set([[0.0]], ids=("a",))
    probe = make_set([[0.0, 1.0]], ids=("p",))
    with pytest.raises(ValueError):
        memorizing_generator(train, probe, noise=0.0, seed=0)
    with pytest.raises(ValueError):
        memorizing_generator(train, train, noise=-0.1, seed=0)


def test_leak_study_directions_smoke():
    spec = ScenarioSpec(scenario="leakage")
    for seed in (0, 1):
        rep = run_leak_study(spec, seed=seed)
        assert rep.metric == "leak-study"
        deltas = rep.extra["deltas"]
        assert deltas["knn_accuracy"] > 0
        assert deltas["top1"] > 0
        assert deltas["tmmd"] < 0
        assert rep.value == deltas["knn_accuracy"]
        assert rep.extra["seed"] == seed
        for side in ("leaked", "noleak"):
            scores = rep.extra[side]
            assert set(scores) >= {"knn_accuracy", "top1", "top5", "tmmd", "train_size", "test_size"}


def test_leak_study_rejects_weak_correlation():
    with pytest.raises(ValueError):
        run_leak_study(ScenarioSpec(scenario="leakage", intra_video_corr=0.5))
    with pytest.raises(ValueError):
        run_leak_study(ScenarioSpec(scenario="leakage"), test_fraction=0.0)
