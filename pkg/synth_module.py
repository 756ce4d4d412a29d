"""Synthetic benchmark generator for the MUCHLAC toolkit.

The "cross-channel" scenario is a 2-band raster of 16x16 cells filled with
independent uniform noise. In positive cells band B is a copy of band A,
so both bands keep the same per-pixel distribution in every cell while
the relationship between the bands differs by class.
"""

from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from raster_module import LabeledPatchSet, MultibandRaster, build_patch_grid, raster_from_raw, stack_patches

CROSS_CHANNEL = "cross-channel"
SCENARIOS = (CROSS_CHANNEL,)
CELL_SIZE = 16
DEFAULT_CELLS = 32
DEFAULT_POSITIVE_FRACTION = 0.3
HISTOGRAM_BINS = 8
HISTOGRAM_THRESHOLD = 0.1


class ScenarioError(ValueError):
    """Raised for unknown scenarios or impossible generator settings."""


@dataclass
class SyntheticScene:
    """A generated raster, its label mask and the settings that made it."""

    raster: MultibandRaster
    mask: MultibandRaster
    scenario: str
    cells: int
    seed: int
    positive_fraction: float

    @property
    def provenance(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "cells": self.cells,
            "cell_size": CELL_SIZE,
            "seed": self.seed,
            "positive_fraction": self.positive_fraction,
        }

    def patch_set(self) -> LabeledPatchSet:
        return build_patch_grid(self.raster, self.mask, CELL_SIZE, source=self.scenario)


def synth_generate(
    scenario: str = CROSS_CHANNEL,
    cells: int = DEFAULT_CELLS,
    seed: int = 7,
    positive_fraction: float = DEFAULT_POSITIVE_FRACTION,
) -> SyntheticScene:
    """Generate a seeded synthetic raster and label mask.

    Args:
        scenario: Scenario name; only "cross-channel" exists.
        cells: Cells per side; the raster is cells * 16 pixels square.
        seed: Generator seed; equal seeds give identical scenes.
        positive_fraction: Share of cells marked positive (rounded to a
            whole number of cells).

    Raises:
        ScenarioError: On an unknown scenario or invalid settings.
    """
    if scenario not in SCENARIOS:
        raise ScenarioError(f"unknown scenario '{scenario}' (known: {', '.join(SCENARIOS)})")
    if cells < 1:
        raise ScenarioError("cells must be >= 1")
    if not 0.0 <= positive_fraction <= 1.0:
        raise ScenarioError("positive fraction must be in [0, 1]")

    rng = np.random.default_rng(seed)
    side = cells * CELL_SIZE
    total = cells * cells
    positives = int(round(positive_fraction * total))

    band_a = rng.integers(0, 65536, size=(side, side), dtype=np.uint16)
    band_b = rng.integers(0, 65536, size=(side, side), dtype=np.uint16)

    chosen = np.zeros(total, dtype=bool)
    chosen[rng.permutation(total)[:positives]] = True
    cell_mask = chosen.reshape(cells, cells)

    # Expand the cell grid to pixels
    pixel_mask = np.kron(cell_mask, np.ones((CELL_SIZE, CELL_SIZE), dtype=bool))
    band_b = np.where(pixel_mask, band_a, band_b)

    raster = raster_from_raw(np.stack([band_a, band_b]), ["A", "B"])
    mask = raster_from_raw(pixel_mask.astype(np.uint16)[np.newaxis], ["mask"], full_scale=1)

    return SyntheticScene(
        raster=raster,
        mask=mask,
        scenario=scenario,
        cells=cells,
        seed=seed,
        positive_fraction=positive_fraction,
    )


def band_histogram_distance(raster: MultibandRaster, patch_set: LabeledPatchSet, bins: int = HISTOGRAM_BINS) -> float:
    """Largest per-band L1 distance between positive and negative pixel histograms.

    Histograms are normalised to sum 1 over equal-width bins on [0, 1], so
    the distance lies in [0, 2]. A set missing either class has distance 0.
    """
    labels = patch_set.labels()
    if not np.any(labels == 1) or not np.any(labels == -1):
        return 0.0

    stack = stack_patches(raster, patch_set)
    distance = 0.0
    for band in range(raster.channels):
        hist_pos, _ = np.histogram(stack[labels == 1, band], bins=bins, range=(0.0, 1.0))
        hist_neg, _ = np.histogram(stack[labels == -1, band], bins=bins, range=(0.0, 1.0))
        l1 = np.abs(hist_pos / hist_pos.sum() - hist_neg / hist_neg.sum()).sum()
        distance = max(distance, float(l1))
    return distance


def self_test(scene: SyntheticScene) -> Tuple[bool, float]:
    """Check that per-band statistics do not give the classes away.

    Returns:
        Tuple[bool, float]: (passed, distance) with passed meaning the
            histogram distance is below HISTOGRAM_THRESHOLD.
    """
    distance = band_histogram_distance(scene.raster, scene.patch_set())
    return distance < HISTOGRAM_THRESHOLD, distance
