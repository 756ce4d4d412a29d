"""Tests for the synthetic cross-channel scene and the experiments run on it."""

import numpy as np
import pytest

from eval_module import SENSITIVITY_FRACTIONS, cross_validate, selection_sweep, sensitivity_sweep
from feature_module import ExtractConfig, extract_dataset
from forest_module import ForestParams, cross_channel_share, oob_permutation_importance, train_forest
from raster_module import load_raster, save_raster
from synth_module import (
    CELL_SIZE,
    ScenarioError,
    band_histogram_distance,
    self_test,
    synth_generate,
)

ROUNDS = 30
SWEEP_ROUNDS = 100
# Largest seed-averaged F drop allowed between neighbouring fractions
TREND_SLACK = 0.05


def test_scene_layout():
    scene = synth_generate(cells=32, seed=7)
    patch_set = scene.patch_set()

    assert scene.raster.band_names == ["A", "B"]
    assert scene.raster.height == scene.raster.width == 32 * CELL_SIZE
    assert len(patch_set.patches) == 1024
    assert patch_set.positive_count() == round(0.3 * 1024)


def test_positive_cells_copy_band_a():
    scene = synth_generate(cells=6, seed=3)
    raw = scene.raster.raw
    for patch in scene.patch_set().patches:
        window = (slice(patch.y, patch.y + CELL_SIZE), slice(patch.x, patch.x + CELL_SIZE))
        same = np.array_equal(raw[0][window], raw[1][window])
        assert same == (patch.label == "positive")


def test_same_seed_writes_identical_files(tmp_path):
    first = synth_generate(cells=4, seed=11)
    second = synth_generate(cells=4, seed=11)
    a = save_raster(first.raster, str(tmp_path / "a.mbr"), provenance=first.provenance)
    b = save_raster(second.raster, str(tmp_path / "b.mbr"), provenance=second.provenance)
    assert (tmp_path / "a.mbr").read_bytes() == (tmp_path / "b.mbr").read_bytes()

    np.testing.assert_array_equal(load_raster(a).raw, load_raster(b).raw)
    assert not np.array_equal(synth_generate(cells=4, seed=12).raster.raw, first.raster.raw)


def test_per_band_statistics_do_not_separate_classes():
    passed, distance = self_test(synth_generate(cells=32, seed=7))
    assert passed
    assert 0.0 <= distance < 0.1


def test_single_class_scene_has_zero_distance():
    scene = synth_generate(cells=4, seed=1, positive_fraction=0.0)
    assert band_histogram_distance(scene.raster, scene.patch_set()) == 0.0


def test_invalid_settings():
    with pytest.raises(ScenarioError, match="unknown scenario"):
        synth_generate("texture")
    with pytest.raises(ScenarioError):
        synth_generate(cells=0)
    with pytest.raises(ScenarioError):
        synth_generate(positive_fraction=1.5)


@pytest.fixture(scope="module")
def scene_features():
    """Both feature kinds for the full-size synthetic scene."""
    scene = synth_generate(cells=32, seed=7)
    patch_set = scene.patch_set()
    full = extract_dataset(patch_set, scene.raster, ExtractConfig(bands=[0, 1], distances=[1]))
    hlac = extract_dataset(
        patch_set, scene.raster, ExtractConfig(bands=[0, 1], distances=[1], use_cross_channel=False)
    )
    return full, hlac


@pytest.fixture(scope="module")
def scene_importance(scene_features):
    full, _ = scene_features
    forest = train_forest(full.values, full.labels, ForestParams(n_trees=100, seed=7))
    return oob_permutation_importance(forest, full.values, full.labels, seed=7, component_names=full.component_names)


def test_cross_channel_features_detect_copied_bands(scene_features):
    full, hlac = scene_features
    assert full.rows == 1024
    assert full.cols == 2 * 35 + 2 * 82
    assert hlac.cols == 2 * 35

    with_cross = cross_validate(full.values, full.labels, k=5, seed=7, rounds=ROUNDS)
    single_band = cross_validate(hlac.values, hlac.labels, k=5, seed=7, rounds=ROUNDS)

    assert with_cross.mean_metrics[2] >= 0.9
    assert single_band.mean_metrics[2] <= 0.6


def test_more_training_data_does_not_hurt(scene_features):
    full, _ = scene_features
    sweep = sensitivity_sweep(
        full.values, full.labels, fractions=SENSITIVITY_FRACTIONS, seeds=(7, 8, 9), k=5, rounds=SWEEP_ROUNDS
    )
    scores = [entry["f_measure"] for entry in sweep["mean_f"]]

    assert [entry["fraction"] for entry in sweep["mean_f"]] == list(SENSITIVITY_FRACTIONS)
    assert scores[-1] >= scores[0]
    assert scores[-1] >= 0.9
    for smaller, larger in zip(scores, scores[1:]):
        assert larger >= smaller - TREND_SLACK, scores


def test_importance_favours_cross_channel_components(scene_features, scene_importance):
    full, _ = scene_features
    assert full.component_names[scene_importance.ranking[0]].startswith("muchlac/")
    assert cross_channel_share(scene_importance, full.component_names, top=100) > 0.5


def test_top_components_keep_detection_quality(scene_features, scene_importance):
    full, _ = scene_features
    results = selection_sweep(full, scene_importance, ks=[50], k=5, rounds=ROUNDS)
    assert [entry["k"] for entry in results] == [50, full.cols]
    top, everything = results
    assert top["f_measure"] >= everything["f_measure"] - 0.05
