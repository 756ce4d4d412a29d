"""Raster I/O module for the MUCHLAC toolkit.

Reads and writes multiband rasters and label masks in the MBR1 container
(a JSON header line followed by little-endian uint16 samples, band
sequential, row major) and cuts rasters into a labelled grid of patches.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from muchlac import read_json_file, setup_output_directory, write_json_file

RASTER_MAGIC = "MBR1"
RASTER_DTYPE = "u16le"
POSITIVE = "positive"
NEGATIVE = "negative"


class RasterFormatError(ValueError):
    """Raised when a raster container violates the MBR1 format."""


class PatchGridError(ValueError):
    """Raised when a patch grid or patch request cannot be satisfied."""


@dataclass
class MultibandRaster:
    """An M-channel intensity grid scaled to [0, 1].

    Attributes:
        data: float64 array of shape (channels, height, width).
        band_names: One unique name per channel.
        full_scale: Raw value that maps to intensity 1.0.
        raw: Optional uint16 samples the intensities were scaled from.
        nodata_mask: Optional (height, width) boolean array of nodata pixels.
        nodata: Raw value marking nodata pixels in the container, if any.
    """

    data: np.ndarray
    band_names: List[str]
    full_scale: int = 65535
    raw: Optional[np.ndarray] = None
    nodata_mask: Optional[np.ndarray] = None
    nodata: Optional[int] = None

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise RasterFormatError("raster data must be (channels, height, width)")
        if self.data.shape[0] < 1:
            raise RasterFormatError("raster needs at least one channel")
        if len(self.band_names) != self.data.shape[0]:
            raise RasterFormatError(
                f"channel size mismatch: {self.data.shape[0]} channels, "
                f"{len(self.band_names)} band names"
            )
        if len(set(self.band_names)) != len(self.band_names):
            raise RasterFormatError("band names must be unique")
        if not np.all(np.isfinite(self.data)) or np.any(self.data < 0):
            raise RasterFormatError("intensities must be finite and >= 0")
        if self.nodata_mask is not None and self.nodata is None:
            raise RasterFormatError("nodata_mask given without a nodata value")

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    def raw_values(self) -> np.ndarray:
        """Return the uint16 samples, rebuilding them from intensities if needed."""
        if self.raw is not None:
            return self.raw
        scaled = np.rint(self.data * self.full_scale)
        return np.clip(scaled, 0, 65535).astype(np.uint16)


@dataclass
class Patch:
    """One grid cell of a raster."""

    x: int
    y: int
    label: str
    source: str = "raster"

    @property
    def positive(self) -> bool:
        return self.label == POSITIVE


@dataclass
class LabeledPatchSet:
    """A non-overlapping grid of labelled square patches."""

    patch_size: int
    width: int
    height: int
    patches: List[Patch] = field(default_factory=list)

    def labels(self) -> np.ndarray:
        """Labels as +1 (positive) / -1 (negative)."""
        return np.array([1 if p.positive else -1 for p in self.patches], dtype=np.int64)

    def positive_count(self) -> int:
        return sum(1 for p in self.patches if p.positive)


def _read_header(handle, path: str) -> Dict[str, Any]:
    """Read and validate the JSON header line of a container."""
    line = handle.readline()
    if not line.endswith(b"\n"):
        raise RasterFormatError(f"malformed header in {path}: missing newline")

    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise RasterFormatError(f"malformed header in {path}") from None

    if not isinstance(header, dict) or header.get("magic") != RASTER_MAGIC:
        raise RasterFormatError(f"malformed header in {path}: bad magic")
    if header.get("dtype") != RASTER_DTYPE:
        raise RasterFormatError(f"malformed header in {path}: dtype must be {RASTER_DTYPE}")

    for key in ("width", "height", "channels", "full_scale"):
        value = header.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise RasterFormatError(f"malformed header in {path}: bad {key}")
    if header["width"] < 1 or header["height"] < 1 or header["channels"] < 1:
        raise RasterFormatError(f"malformed header in {path}: empty raster")
    if header["full_scale"] == 0:
        raise RasterFormatError(f"full-scale value of zero in {path}")

    band_names = header.get("band_names")
    if not isinstance(band_names, list) or len(band_names) != header["channels"]:
        raise RasterFormatError(f"channel size mismatch in {path}: band_names vs channels")

    return header


def load_raster(path: str) -> MultibandRaster:
    """Load an MBR1 container and scale its samples to [0, 1].

    Args:
        path: Path to the container file.

    Returns:
        MultibandRaster: Raster with intensities raw / full_scale.

    Raises:
        FileNotFoundError: If the file does not exist.
        RasterFormatError: On a malformed header, truncated payload or
            channel size mismatch.

    Note:
        When the header declares a "nodata" raw value, pixels where any
        channel holds it are flagged in nodata_mask and set to 0.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Raster file not found: {path}")

    with open(file_path, "rb") as handle:
        header = _read_header(handle, path)
        payload = handle.read()

    channels, height, width = header["channels"], header["height"], header["width"]
    expected = channels * height * width * 2
    if len(payload) < expected:
        raise RasterFormatError(
            f"truncated payload in {path}: expected {expected} bytes, found {len(payload)}"
        )
    if len(payload) > expected:
        raise RasterFormatError(
            f"channel size mismatch in {path}: {len(payload) - expected} trailing bytes"
        )

    raw = np.frombuffer(payload, dtype="<u2").reshape(channels, height, width)
    raw = raw.astype(np.uint16)
    data = raw.astype(np.float64) / float(header["full_scale"])

    nodata = header.get("nodata")
    nodata_mask = None
    if nodata is not None:
        if not isinstance(nodata, int) or isinstance(nodata, bool) or not 0 <= nodata <= 65535:
            raise RasterFormatError(f"malformed header in {path}: bad nodata")
        nodata_mask = np.any(raw == nodata, axis=0)
        data[:, nodata_mask] = 0.0

    return MultibandRaster(
        data=data,
        band_names=[str(name) for name in header["band_names"]],
        full_scale=int(header["full_scale"]),
        raw=raw,
        nodata_mask=nodata_mask,
        nodata=nodata,
    )


def save_raster(raster: MultibandRaster, path: str, provenance: Optional[Dict[str, Any]] = None) -> str:
    """Write a raster as an MBR1 container.

    Args:
        raster: Raster to write; its raw samples are stored unchanged.
            Pixels flagged in nodata_mask are written as the nodata value
            in every channel, so loading the file flags them again.
        path: Destination file path.
        provenance: Optional config echo stored in the header.

    Returns:
        str: The path written.
    """
    header: Dict[str, Any] = {
        "magic": RASTER_MAGIC,
        "width": raster.width,
        "height": raster.height,
        "channels": raster.channels,
        "dtype": RASTER_DTYPE,
        "full_scale": int(raster.full_scale),
        "band_names": list(raster.band_names),
    }
    samples = raster.raw_values()
    if raster.nodata is not None:
        header["nodata"] = int(raster.nodata)
        if raster.nodata_mask is not None:
            samples = samples.copy()
            samples[:, raster.nodata_mask] = raster.nodata
    if provenance is not None:
        header["provenance"] = provenance

    out_path = setup_output_directory(path)
    with open(out_path, "wb") as handle:
        handle.write(json.dumps(header, allow_nan=False).encode("utf-8") + b"\n")
        handle.write(samples.astype("<u2").tobytes(order="C"))

    return str(out_path)


def raster_from_raw(raw: np.ndarray, band_names: List[str], full_scale: int = 65535) -> MultibandRaster:
    """Build a raster from a (channels, height, width) uint16 array."""
    if full_scale == 0:
        raise RasterFormatError("full-scale value of zero")
    raw = np.asarray(raw, dtype=np.uint16)
    return MultibandRaster(
        data=raw.astype(np.float64) / float(full_scale),
        band_names=list(band_names),
        full_scale=int(full_scale),
        raw=raw,
    )


def build_patch_grid(
    raster: MultibandRaster,
    label_mask: MultibandRaster,
    patch_size: int,
    source: str = "raster",
) -> LabeledPatchSet:
    """Cut a raster into a non-overlapping grid of labelled patches.

    Args:
        raster: The image raster.
        label_mask: Single-channel mask of the same size; raw 1 marks
            target, 0 background.
        patch_size: Side of the square patches in pixels.
        source: Identifier of the raster stored with every patch.

    Returns:
        LabeledPatchSet: Patches in row-major grid order. Partial patches
            at the right/bottom edges are discarded. A patch is positive
            when any mask pixel inside it is set.

    Raises:
        PatchGridError: On dimension mismatch, an oversized patch or a mask
            value outside {0, 1}.
    """
    if label_mask.channels != 1:
        raise PatchGridError("label mask must have exactly one channel")
    if (label_mask.height, label_mask.width) != (raster.height, raster.width):
        raise PatchGridError(
            f"dimension mismatch: raster {raster.width}x{raster.height}, "
            f"mask {label_mask.width}x{label_mask.height}"
        )
    if patch_size < 1:
        raise PatchGridError("patch_size must be >= 1")
    if patch_size > raster.width or patch_size > raster.height:
        raise PatchGridError(
            f"patch_size {patch_size} larger than raster {raster.width}x{raster.height}"
        )

    mask_values = label_mask.raw_values()
    if np.any(mask_values > 1):
        bad = np.unique(mask_values[mask_values > 1])[:5].tolist()
        raise PatchGridError(f"label mask values must be 0 or 1, found {bad}")

    rows = raster.height // patch_size
    cols = raster.width // patch_size

    # Set pixels are 1, so a cell is positive when its sum is nonzero
    mask = mask_values[0, : rows * patch_size, : cols * patch_size]
    cell_sums = mask.astype(np.int64).reshape(rows, patch_size, cols, patch_size).sum(axis=(1, 3))

    patches = []
    for row in range(rows):
        for col in range(cols):
            label = POSITIVE if cell_sums[row, col] > 0 else NEGATIVE
            patches.append(Patch(x=col * patch_size, y=row * patch_size, label=label, source=source))

    return LabeledPatchSet(
        patch_size=patch_size,
        width=raster.width,
        height=raster.height,
        patches=patches,
    )


def extract_patch(raster: MultibandRaster, origin: Tuple[int, int], size: int) -> MultibandRaster:
    """Return the size x size window of a raster whose top-left corner is origin.

    Args:
        raster: Source raster.
        origin: (x, y) of the top-left pixel.
        size: Side of the window in pixels.

    Raises:
        PatchGridError: If the window leaves the raster.
    """
    x, y = origin
    if size < 1 or x < 0 or y < 0 or x + size > raster.width or y + size > raster.height:
        raise PatchGridError(
            f"out-of-bounds patch request: origin ({x},{y}) size {size} "
            f"on {raster.width}x{raster.height}"
        )

    raw = raster.raw[:, y : y + size, x : x + size] if raster.raw is not None else None
    nodata_mask = raster.nodata_mask[y : y + size, x : x + size] if raster.nodata_mask is not None else None

    return MultibandRaster(
        data=raster.data[:, y : y + size, x : x + size],
        band_names=list(raster.band_names),
        full_scale=raster.full_scale,
        raw=raw,
        nodata_mask=nodata_mask,
        nodata=raster.nodata,
    )


def stack_patches(raster: MultibandRaster, patch_set: LabeledPatchSet) -> np.ndarray:
    """Stack every patch of a set into a (patches, channels, size, size) array."""
    size = patch_set.patch_size
    stack = np.empty((len(patch_set.patches), raster.channels, size, size), dtype=np.float64)
    for index, patch in enumerate(patch_set.patches):
        try:
            stack[index] = extract_patch(raster, (patch.x, patch.y), size).data
        except PatchGridError as error:
            raise PatchGridError(f"patch at origin ({patch.x},{patch.y}): {error}") from None
    return stack


def save_patch_set(patch_set: LabeledPatchSet, path: str, config: Optional[Dict[str, Any]] = None) -> str:
    """Write a patch set as JSON."""
    payload = {
        "config": config or {},
        "patch_size": patch_set.patch_size,
        "width": patch_set.width,
        "height": patch_set.height,
        "patches": [
            {"x": p.x, "y": p.y, "label": p.label, "source": p.source}
            for p in patch_set.patches
        ],
    }
    return write_json_file(path, payload)


def load_patch_set(path: str) -> LabeledPatchSet:
    """Read a patch set written by save_patch_set."""
    payload = read_json_file(path)
    try:
        patches = [
            Patch(
                x=int(item["x"]),
                y=int(item["y"]),
                label=str(item["label"]),
                source=str(item.get("source", "raster")),
            )
            for item in payload["patches"]
        ]
        patch_set = LabeledPatchSet(
            patch_size=int(payload["patch_size"]),
            width=int(payload["width"]),
            height=int(payload["height"]),
            patches=patches,
        )
    except (KeyError, TypeError) as error:
        raise PatchGridError(f"malformed patch set {path}: {error}") from None

    for patch in patches:
        if patch.label not in (POSITIVE, NEGATIVE):
            raise PatchGridError(f"malformed patch set {path}: label '{patch.label}'")

    return patch_set
