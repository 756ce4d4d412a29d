"""GLCM baseline module for the MUCHLAC toolkit.

Gray-level co-occurrence matrices per band and angle, summarised by five
Haralick quantities: angular second moment, contrast, inverse difference
moment, entropy and correlation.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from skimage.feature import graycomatrix

from feature_module import FeatureMatrix, FeatureVector
from raster_module import LabeledPatchSet, MultibandRaster, PatchGridError, stack_patches

GLCM_ANGLES = (0, 45, 90, 135)
DIAGONAL_ANGLES = (45, 135)
HARALICK_NAMES = ("asm", "contrast", "idm", "entropy", "correlation")


class GlcmError(ValueError):
    """Raised for invalid GLCM settings, degenerate patches or bad matrices."""


@dataclass
class GlcmConfig:
    """GLCM extraction settings.

    Attributes:
        bands: Channel indices, in output order.
        levels: Number of equal-width gray levels over [0, 1].
        angles: Subset of 0, 45, 90, 135 degrees.
        distance: Pixel offset length.
        symmetric: Add the transpose before normalising.
    """

    bands: List[int]
    levels: int = 32
    angles: List[int] = field(default_factory=lambda: list(GLCM_ANGLES))
    distance: int = 1
    symmetric: bool = True

    def validate(self, channels: Optional[int] = None) -> None:
        if self.levels < 2:
            raise GlcmError("levels must be >= 2")
        if self.distance < 1:
            raise GlcmError("distance must be >= 1")
        if not self.angles or any(angle not in GLCM_ANGLES for angle in self.angles):
            raise GlcmError(f"angles must be a non-empty subset of {GLCM_ANGLES}")
        if not self.bands:
            raise GlcmError("bands must not be empty")
        if channels is not None and any(b < 0 or b >= channels for b in self.bands):
            raise GlcmError(f"bands {self.bands} outside raster channels 0..{channels - 1}")

    def as_dict(self) -> Dict[str, Any]:
        return {
            "bands": list(self.bands),
            "levels": self.levels,
            "angles": list(self.angles),
            "distance": self.distance,
            "symmetric": self.symmetric,
            "log_base": 2,
        }


def quantize(channel: np.ndarray, levels: int) -> np.ndarray:
    """Equal-width quantisation of [0, 1] intensities into 0..levels-1."""
    bins = np.floor(np.asarray(channel, dtype=np.float64) * levels)
    return np.clip(bins, 0, levels - 1).astype(np.uint16)


def compute_glcm(channel: np.ndarray, angle: int, distance: int, levels: int, symmetric: bool = True) -> np.ndarray:
    """Normalised co-occurrence matrix of one channel.

    Args:
        channel: 2-D intensities in [0, 1].
        angle: 0, 45, 90 or 135 degrees.
        distance: Pixel steps along each axis the angle moves on.
        levels: Quantisation levels.
        symmetric: Count each pair in both directions.

    Returns:
        np.ndarray: levels x levels matrix summing to 1.

    Raises:
        GlcmError: If the patch holds no pixel pair at this offset.
    """
    if angle not in GLCM_ANGLES:
        raise GlcmError(f"angle {angle} not in {GLCM_ANGLES}")

    # graycomatrix rounds (d sin, d cos); diagonals need d * sqrt(2) to step d pixels per axis
    step = distance * np.sqrt(2.0) if angle in DIAGONAL_ANGLES else distance
    counts = graycomatrix(
        quantize(channel, levels),
        distances=[step],
        angles=[np.deg2rad(angle)],
        levels=levels,
        symmetric=symmetric,
        normed=False,
    )[:, :, 0, 0].astype(np.float64)

    total = counts.sum()
    if total == 0:
        raise GlcmError(f"degenerate patch: no pixel pairs at angle {angle}, distance {distance}")
    return counts / total


def haralick5(glcm: np.ndarray) -> np.ndarray:
    """ASM, contrast, IDM, entropy (log2) and correlation of a normalised GLCM.

    Correlation is 0 when either marginal standard deviation is 0.

    Raises:
        GlcmError: If the matrix is not square, has negative entries or
            does not sum to 1.
    """
    p = np.asarray(glcm, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise GlcmError("GLCM must be a square matrix")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise GlcmError("unnormalized GLCM: entries must be >= 0 and sum to 1")

    levels = p.shape[0]
    i, j = np.ogrid[0:levels, 0:levels]
    diff = (i - j).astype(np.float64)

    asm = np.sum(p ** 2)
    contrast = np.sum(diff ** 2 * p)
    idm = np.sum(p / (1.0 + diff ** 2))

    nonzero = p[p > 0]
    entropy = -np.sum(nonzero * np.log2(nonzero))

    mu_i = np.sum(i * p)
    mu_j = np.sum(j * p)
    sigma_i = np.sqrt(np.sum((i - mu_i) ** 2 * p))
    sigma_j = np.sqrt(np.sum((j - mu_j) ** 2 * p))
    if sigma_i > 0 and sigma_j > 0:
        correlation = np.sum((i - mu_i) * (j - mu_j) * p) / (sigma_i * sigma_j)
    else:
        correlation = 0.0

    return np.array([asm, contrast, idm, entropy, correlation], dtype=np.float64)


def glcm_component_names(config: GlcmConfig) -> List[str]:
    return [
        f"glcm/b{band}/a{angle}/{name}"
        for band in config.bands
        for angle in config.angles
        for name in HARALICK_NAMES
    ]


def _patch_features(data: np.ndarray, config: GlcmConfig) -> np.ndarray:
    values = []
    for band in config.bands:
        for angle in config.angles:
            glcm = compute_glcm(data[band], angle, config.distance, config.levels, config.symmetric)
            values.append(haralick5(glcm))
    return np.concatenate(values)


def extract_glcm_features(patch: MultibandRaster, config: GlcmConfig) -> FeatureVector:
    """Haralick quantities for every band x angle, concatenated."""
    config.validate(patch.channels)
    return FeatureVector(
        values=_patch_features(patch.data, config),
        component_names=glcm_component_names(config),
    )


def extract_glcm_dataset(patch_set: LabeledPatchSet, raster: MultibandRaster, config: GlcmConfig) -> FeatureMatrix:
    """GLCM feature matrix with one row per patch.

    Raises:
        GlcmError: If a patch is degenerate; the message names its origin.
    """
    config.validate(raster.channels)
    names = glcm_component_names(config)

    try:
        stack = stack_patches(raster, patch_set)
    except PatchGridError as error:
        raise GlcmError(str(error)) from None

    rows = np.zeros((len(patch_set.patches), len(names)), dtype=np.float64)
    for index, patch in enumerate(patch_set.patches):
        try:
            rows[index] = _patch_features(stack[index], config)
        except GlcmError as error:
            raise GlcmError(f"patch at origin ({patch.x},{patch.y}): {error}") from None

    return FeatureMatrix(values=rows, component_names=names, labels=patch_set.labels())
