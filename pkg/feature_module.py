"""Feature extraction module for the MUCHLAC toolkit.

Computes HLAC and MUCHLAC product-sum features of patches,

    X(a_1, ..., a_N) = sum_r f(r) f(r + a_1) ... f(r + a_N),

over the valid region where the full (2m+1) x (2m+1) window fits, for
every band, every ordered band pair and every displacement distance, and
assembles them into feature matrices stored in the FMX1 container.
"""

import json
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from mask_module import (
    HLAC,
    MUCHLAC,
    MaskGroup,
    MaskPattern,
    Points,
    d4_orbits,
    enumerate_hlac_masks,
    enumerate_muchlac_masks,
)
from muchlac import setup_output_directory
from raster_module import LabeledPatchSet, MultibandRaster, PatchGridError, stack_patches

MATRIX_MAGIC = "FMX1"
INVARIANCE_NONE = "none"
INVARIANCE_D4 = "rotation_reflection"
DEFAULT_BAND_COUNT = 7
CHUNK_SIZE = 256


class FeatureError(ValueError):
    """Raised when features cannot be extracted or a matrix is malformed."""


@dataclass
class ExtractConfig:
    """Which blocks extract_full concatenates.

    Attributes:
        bands: Channel indices, in output order.
        distances: Displacement distances m, in output order.
        use_cross_channel: Append MUCHLAC blocks for every ordered band pair.
        invariance: "none" or "rotation_reflection" (D4 orbit sums).
    """

    bands: List[int]
    distances: List[int] = field(default_factory=lambda: [1, 2, 3, 4])
    use_cross_channel: bool = True
    invariance: str = INVARIANCE_NONE

    def validate(self, channels: Optional[int] = None) -> None:
        if not self.bands:
            raise FeatureError("bands must not be empty")
        if len(set(self.bands)) != len(self.bands):
            raise FeatureError("bands must be unique")
        if not self.distances or any(m < 1 for m in self.distances):
            raise FeatureError("distances must be a non-empty list of values >= 1")
        if self.invariance not in (INVARIANCE_NONE, INVARIANCE_D4):
            raise FeatureError(f"unknown invariance '{self.invariance}'")
        if channels is not None and any(b < 0 or b >= channels for b in self.bands):
            raise FeatureError(f"bands {self.bands} outside raster channels 0..{channels - 1}")

    def pairs(self) -> List[Tuple[int, int]]:
        """All ordered band pairs, in band order."""
        return list(permutations(self.bands, 2))

    def max_distance(self) -> int:
        return max(self.distances)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "bands": list(self.bands),
            "distances": list(self.distances),
            "use_cross_channel": self.use_cross_channel,
            "invariance": self.invariance,
        }


def default_bands(channels: int) -> List[int]:
    """The first min(7, channels) channels."""
    return list(range(min(DEFAULT_BAND_COUNT, channels)))


@dataclass
class MaskTable:
    """Masks and orbits for one displacement distance."""

    distance: int
    hlac: List[MaskPattern]
    muchlac: List[MaskPattern]
    hlac_groups: List[MaskGroup]
    muchlac_groups: List[MaskGroup]


def build_mask_tables(distances: Sequence[int]) -> Dict[int, MaskTable]:
    """Enumerate masks and orbits once per distance."""
    tables = {}
    for m in distances:
        hlac = enumerate_hlac_masks(m)
        muchlac = enumerate_muchlac_masks(m)
        tables[m] = MaskTable(
            distance=m,
            hlac=hlac,
            muchlac=muchlac,
            hlac_groups=d4_orbits(hlac),
            muchlac_groups=d4_orbits(muchlac),
        )
    return tables


@dataclass
class FeatureVector:
    """Feature values of one patch with their component names."""

    values: np.ndarray
    component_names: List[str]


@dataclass
class FeatureMatrix:
    """One feature row per patch.

    Attributes:
        values: float64 array of shape (rows, cols).
        component_names: One name per column.
        labels: Optional +1/-1 label per row.
        config: Config echo of the run that produced the matrix.
    """

    values: np.ndarray
    component_names: List[str]
    labels: Optional[np.ndarray] = None
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.component_names):
            raise FeatureError("values must be (rows, cols) with one name per column")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.values.shape[0],):
                raise FeatureError("labels must hold one entry per row")

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])

    def take_columns(self, indices: Sequence[int]) -> "FeatureMatrix":
        """Matrix restricted to the given columns, in the given order."""
        indices = [int(i) for i in indices]
        return FeatureMatrix(
            values=self.values[:, indices],
            component_names=[self.component_names[i] for i in indices],
            labels=None if self.labels is None else self.labels.copy(),
            config=dict(self.config),
        )


@lru_cache(maxsize=None)
def placements(points: Points, m: int) -> Tuple[Points, ...]:
    """Reference-centred placements of a mask inside the (2m+1)^2 window.

    Each distinct offset of the mask in turn becomes the window centre; a
    placement is kept when every point then lies within [-m, m] on both
    axes.
    """
    kept = []
    for ref_y, ref_x in sorted({(dy, dx) for _, dy, dx in points}):
        shifted = tuple((slot, dy - ref_y, dx - ref_x) for slot, dy, dx in points)
        if all(abs(dy) <= m and abs(dx) <= m for _, dy, dx in shifted):
            kept.append(shifted)

    if not kept:
        raise FeatureError(f"mask {points} does not fit a window of distance {m}")
    return tuple(kept)


def _check_window(height: int, width: int, m: int) -> None:
    if height < 2 * m + 1 or width < 2 * m + 1:
        raise FeatureError(f"patch too small for distance m={m}: {width}x{height}")


def _product_sums(stack: np.ndarray, slot_channels: Sequence[int], masks: Sequence[Points], m: int) -> np.ndarray:
    """Placement-averaged product sums for a (patches, channels, H, W) stack.

    Returns:
        np.ndarray: Shape (patches, len(masks)).
    """
    count, _, height, width = stack.shape
    _check_window(height, width, m)
    out = np.zeros((count, len(masks)), dtype=np.float64)

    for column, points in enumerate(masks):
        mask_placements = placements(points, m)
        total = np.zeros(count, dtype=np.float64)
        for placement in mask_placements:
            product = np.ones((count, height - 2 * m, width - 2 * m), dtype=np.float64)
            for slot, dy, dx in placement:
                channel = slot_channels[slot]
                product = product * stack[:, channel, m + dy : height - m + dy, m + dx : width - m + dx]
            total += product.reshape(count, -1).sum(axis=1)
        out[:, column] = total / len(mask_placements)

    return out


def _grouped_sums(stack: np.ndarray, slot_channels: Sequence[int], groups: Sequence[MaskGroup], m: int) -> np.ndarray:
    """Orbit sums: each group's value is the sum over its variants."""
    variants = [points for group in groups for points in group.variants]
    values = _product_sums(stack, slot_channels, variants, m)

    out = np.zeros((stack.shape[0], len(groups)), dtype=np.float64)
    start = 0
    for column, group in enumerate(groups):
        stop = start + len(group.variants)
        out[:, column] = values[:, start:stop].sum(axis=1)
        start = stop
    return out


def _as_stack(patch) -> np.ndarray:
    data = patch.data if isinstance(patch, MultibandRaster) else np.asarray(patch, dtype=np.float64)
    if data.ndim == 2:
        data = data[np.newaxis]
    return data[np.newaxis]


def extract_hlac(channel: np.ndarray, masks: Sequence[MaskPattern], m: int) -> np.ndarray:
    """HLAC product sums of a single-channel patch.

    Args:
        channel: 2-D intensity array.
        masks: Single-channel masks.
        m: Displacement distance.

    Returns:
        np.ndarray: One value per mask.

    Raises:
        FeatureError: If the patch is smaller than the window.
    """
    stack = _as_stack(np.asarray(channel, dtype=np.float64))
    return _product_sums(stack, [0], [mask.points for mask in masks], m)[0]


def extract_muchlac_pair(
    patch: MultibandRaster,
    pair: Tuple[int, int],
    masks: Sequence[MaskPattern],
    m: int,
) -> np.ndarray:
    """MUCHLAC product sums for one ordered band pair.

    Slot 0 reads band pair[0], slot 1 reads band pair[1].
    """
    stack = _as_stack(patch)
    channels = stack.shape[1]
    if any(band < 0 or band >= channels for band in pair):
        raise FeatureError(f"band pair {pair} outside patch channels 0..{channels - 1}")
    return _product_sums(stack, list(pair), [mask.points for mask in masks], m)[0]


def component_names(config: ExtractConfig, tables: Dict[int, MaskTable]) -> List[str]:
    """Names of every column extract_full produces, in column order."""
    grouped = config.invariance == INVARIANCE_D4
    names = []
    for m in config.distances:
        table = tables[m]
        hlac_ids = [f"g{g.group_id:02d}" for g in table.hlac_groups] if grouped else [
            f"k{i:02d}" for i in range(len(table.hlac))
        ]
        for band in config.bands:
            names.extend(f"{HLAC}/b{band}/m{m}/{ident}" for ident in hlac_ids)

        if config.use_cross_channel:
            muchlac_ids = [f"g{g.group_id:02d}" for g in table.muchlac_groups] if grouped else [
                f"k{i:02d}" for i in range(len(table.muchlac))
            ]
            for band_a, band_b in config.pairs():
                names.extend(f"{MUCHLAC}/b{band_a}-b{band_b}/m{m}/{ident}" for ident in muchlac_ids)
    return names


def extract_stack(stack: np.ndarray, config: ExtractConfig, tables: Dict[int, MaskTable]) -> np.ndarray:
    """Feature rows for a (patches, channels, H, W) stack; see extract_full."""
    grouped = config.invariance == INVARIANCE_D4
    blocks = []
    for m in config.distances:
        table = tables[m]
        for band in config.bands:
            if grouped:
                blocks.append(_grouped_sums(stack, [band], table.hlac_groups, m))
            else:
                blocks.append(_product_sums(stack, [band], [k.points for k in table.hlac], m))

        if config.use_cross_channel:
            for pair in config.pairs():
                if grouped:
                    blocks.append(_grouped_sums(stack, list(pair), table.muchlac_groups, m))
                else:
                    blocks.append(_product_sums(stack, list(pair), [k.points for k in table.muchlac], m))

    if not blocks:
        return np.zeros((stack.shape[0], 0), dtype=np.float64)
    return np.concatenate(blocks, axis=1)


def extract_full(
    patch: MultibandRaster,
    config: ExtractConfig,
    tables: Optional[Dict[int, MaskTable]] = None,
) -> FeatureVector:
    """Concatenated HLAC/MUCHLAC feature vector of one patch.

    For each distance: HLAC per band (band order), then MUCHLAC per ordered
    pair when cross-channel features are enabled. With rotation_reflection
    invariance every block holds orbit sums instead of per-mask values.

    Raises:
        FeatureError: On an invalid config or a patch smaller than
            2 * max(distances) + 1.
    """
    config.validate(patch.channels)
    if tables is None:
        tables = build_mask_tables(config.distances)
    _check_window(patch.height, patch.width, config.max_distance())

    values = extract_stack(_as_stack(patch), config, tables)[0]
    return FeatureVector(values=values, component_names=component_names(config, tables))


def extract_dataset(
    patch_set: LabeledPatchSet,
    raster: MultibandRaster,
    config: ExtractConfig,
    tables: Optional[Dict[int, MaskTable]] = None,
    threads: int = 1,
    progress: bool = False,
) -> FeatureMatrix:
    """Feature matrix with one row per patch, labels carried through.

    Rows are computed independently, so their values do not depend on
    patch order, chunking or thread count.

    Raises:
        FeatureError: If a patch cannot be extracted; the message names its origin.
    """
    config.validate(raster.channels)
    if tables is None:
        tables = build_mask_tables(config.distances)
    names = component_names(config, tables)

    if not patch_set.patches:
        return FeatureMatrix(
            values=np.zeros((0, len(names))),
            component_names=names,
            labels=np.zeros(0, dtype=np.int64),
        )

    size = patch_set.patch_size
    if size < 2 * config.max_distance() + 1:
        first = patch_set.patches[0]
        raise FeatureError(
            f"patch at origin ({first.x},{first.y}): patch too small for "
            f"distance m={config.max_distance()}"
        )

    try:
        stack = stack_patches(raster, patch_set)
    except PatchGridError as error:
        raise FeatureError(str(error)) from None

    chunks = [slice(start, start + CHUNK_SIZE) for start in range(0, stack.shape[0], CHUNK_SIZE)]
    if progress:
        chunks = tqdm(chunks, desc="Extracting", unit="chunk")

    rows = Parallel(n_jobs=threads, prefer="threads")(
        delayed(extract_stack)(stack[chunk], config, tables) for chunk in chunks
    )

    return FeatureMatrix(
        values=np.concatenate(rows, axis=0),
        component_names=names,
        labels=patch_set.labels(),
    )


def save_feature_matrix(matrix: FeatureMatrix, path: str) -> str:
    """Write a matrix as an FMX1 container."""
    header: Dict[str, Any] = {
        "magic": MATRIX_MAGIC,
        "rows": matrix.rows,
        "cols": matrix.cols,
        "component_names": list(matrix.component_names),
    }
    if matrix.labels is not None:
        header["labels"] = [int(v) for v in matrix.labels]
    if matrix.config:
        header["config"] = matrix.config

    out_path = setup_output_directory(path)
    with open(out_path, "wb") as handle:
        handle.write(json.dumps(header, allow_nan=False).encode("utf-8") + b"\n")
        handle.write(np.ascontiguousarray(matrix.values, dtype="<f8").tobytes(order="C"))
    return str(out_path)


def load_feature_matrix(path: str) -> FeatureMatrix:
    """Read an FMX1 container.

    Raises:
        FileNotFoundError: If the file does not exist.
        FeatureError: On a malformed header or payload size.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Feature matrix not found: {path}")

    with open(file_path, "rb") as handle:
        line = handle.readline()
        payload = handle.read()

    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FeatureError(f"malformed feature matrix header in {path}") from None
    if not isinstance(header, dict) or header.get("magic") != MATRIX_MAGIC:
        raise FeatureError(f"malformed feature matrix header in {path}: bad magic")

    rows, cols = int(header.get("rows", -1)), int(header.get("cols", -1))
    names = header.get("component_names")
    if rows < 0 or cols < 0 or not isinstance(names, list) or len(names) != cols:
        raise FeatureError(f"malformed feature matrix header in {path}")
    if len(payload) != rows * cols * 8:
        raise FeatureError(
            f"feature matrix payload in {path}: expected {rows * cols * 8} bytes, found {len(payload)}"
        )

    values = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FeatureError(f"non-finite feature values in {path}")

    return FeatureMatrix(
        values=values,
        component_names=[str(name) for name in names],
        labels=header.get("labels"),
        config=header.get("config", {}),
    )
