"""Tests for the MBR1 raster container and the patch grid."""

import json

import numpy as np
import pytest

from raster_module import (
    NEGATIVE,
    POSITIVE,
    LabeledPatchSet,
    MultibandRaster,
    Patch,
    PatchGridError,
    RasterFormatError,
    build_patch_grid,
    extract_patch,
    load_patch_set,
    load_raster,
    raster_from_raw,
    save_patch_set,
    save_raster,
)


def _write_container(path, header, raw):
    with open(path, "wb") as handle:
        handle.write(json.dumps(header).encode("utf-8") + b"\n")
        handle.write(np.asarray(raw, dtype="<u2").tobytes())


def _header(**overrides):
    header = {
        "magic": "MBR1",
        "width": 2,
        "height": 2,
        "channels": 1,
        "dtype": "u16le",
        "full_scale": 65535,
        "band_names": ["B1"],
    }
    header.update(overrides)
    return header


def test_load_scales_by_full_scale(tmp_path):
    path = tmp_path / "r.mbr"
    _write_container(path, _header(), [0, 32768, 65535, 65535])
    raster = load_raster(str(path))

    assert raster.channels == 1
    assert raster.band_names == ["B1"]
    np.testing.assert_allclose(raster.data[0], [[0.0, 32768 / 65535], [1.0, 1.0]], atol=1e-9)
    assert raster.data[0, 0, 1] == pytest.approx(0.5, abs=1e-4)


def test_truncated_payload(tmp_path):
    path = tmp_path / "r.mbr"
    _write_container(path, _header(channels=3, band_names=["a", "b", "c"]), np.zeros(8))
    with pytest.raises(RasterFormatError, match="truncated payload"):
        load_raster(str(path))


def test_trailing_bytes_and_band_name_mismatch(tmp_path):
    path = tmp_path / "r.mbr"
    _write_container(path, _header(), np.zeros(5))
    with pytest.raises(RasterFormatError, match="channel size mismatch"):
        load_raster(str(path))

    _write_container(path, _header(band_names=["a", "b"]), np.zeros(4))
    with pytest.raises(RasterFormatError, match="channel size mismatch"):
        load_raster(str(path))


def test_malformed_headers(tmp_path):
    path = tmp_path / "r.mbr"
    _write_container(path, _header(full_scale=0), np.zeros(4))
    with pytest.raises(RasterFormatError, match="full-scale"):
        load_raster(str(path))

    _write_container(path, _header(magic="TIFF"), np.zeros(4))
    with pytest.raises(RasterFormatError, match="bad magic"):
        load_raster(str(path))

    _write_container(path, _header(dtype="f32"), np.zeros(4))
    with pytest.raises(RasterFormatError, match="dtype"):
        load_raster(str(path))

    path.write_bytes(b"not json\n")
    with pytest.raises(RasterFormatError, match="malformed header"):
        load_raster(str(path))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_raster("does/not/exist.mbr")


def test_nodata_pixels_become_zero(tmp_path):
    path = tmp_path / "r.mbr"
    _write_container(path, _header(nodata=7), [7, 100, 200, 300])
    raster = load_raster(str(path))
    assert raster.nodata_mask.tolist() == [[True, False], [False, False]]
    assert raster.data[0, 0, 0] == 0.0


def test_nodata_survives_save_and_load(tmp_path):
    path = tmp_path / "r.mbr"
    header = _header(channels=2, band_names=["B1", "B2"], nodata=7)
    _write_container(path, header, [7, 100, 200, 300, 1, 2, 3, 7])
    raster = load_raster(str(path))
    assert raster.nodata == 7

    reloaded = load_raster(save_raster(raster, str(tmp_path / "copy.mbr")))
    assert reloaded.nodata == 7
    np.testing.assert_array_equal(reloaded.nodata_mask, [[True, False], [False, True]])
    np.testing.assert_array_equal(reloaded.data, raster.data)

    window = extract_patch(raster, (1, 1), 1)
    assert window.nodata == 7
    assert window.nodata_mask.tolist() == [[True]]


def test_nodata_mask_without_raw_samples_is_written(tmp_path):
    mask = np.array([[False, True], [False, False]])
    raster = MultibandRaster(
        data=np.full((1, 2, 2), 0.5), band_names=["B1"], full_scale=100, nodata_mask=mask, nodata=9
    )
    reloaded = load_raster(save_raster(raster, str(tmp_path / "r.mbr")))

    np.testing.assert_array_equal(reloaded.nodata_mask, mask)
    np.testing.assert_array_equal(reloaded.raw[0], [[50, 9], [50, 50]])
    with pytest.raises(RasterFormatError, match="nodata"):
        MultibandRaster(data=np.zeros((1, 2, 2)), band_names=["B1"], nodata_mask=mask)


def test_bad_nodata_header_rejected(tmp_path):
    path = tmp_path / "r.mbr"
    _write_container(path, _header(nodata=70000), [0, 0, 0, 0])
    with pytest.raises(RasterFormatError, match="bad nodata"):
        load_raster(str(path))


def test_save_then_load_keeps_raw_samples(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 65536, size=(3, 5, 7), dtype=np.uint16)
    raster = raster_from_raw(raw, ["B2", "B3", "B4"])

    path = save_raster(raster, str(tmp_path / "out" / "r.mbr"), provenance={"seed": 7})
    loaded = load_raster(path)

    np.testing.assert_array_equal(loaded.raw, raw)
    np.testing.assert_array_equal(loaded.data, raster.data)
    assert loaded.band_names == ["B2", "B3", "B4"]


def test_duplicate_band_names_rejected():
    with pytest.raises(RasterFormatError):
        raster_from_raw(np.zeros((2, 2, 2)), ["B1", "B1"])


def _mask(height, width, pixels=()):
    raw = np.zeros((1, height, width), dtype=np.uint16)
    for y, x in pixels:
        raw[0, y, x] = 1
    return raster_from_raw(raw, ["mask"], full_scale=1)


def _image(height, width, channels=2):
    return raster_from_raw(np.zeros((channels, height, width), dtype=np.uint16), [f"B{i}" for i in range(channels)])


def test_single_labelled_pixel_marks_one_patch():
    patch_set = build_patch_grid(_image(32, 32), _mask(32, 32, [(3, 3)]), 16)
    assert len(patch_set.patches) == 4
    assert patch_set.positive_count() == 1
    assert patch_set.patches[0].label == POSITIVE
    assert [(p.x, p.y) for p in patch_set.patches] == [(0, 0), (16, 0), (0, 16), (16, 16)]


def test_partial_edge_patches_are_discarded():
    patch_set = build_patch_grid(_image(32, 33), _mask(32, 33), 16)
    assert len(patch_set.patches) == 4
    assert all(p.label == NEGATIVE for p in patch_set.patches)


def test_positive_count_matches_cell_sums():
    rng = np.random.default_rng(1)
    height, width, size = 37, 45, 8
    pixels = [tuple(p) for p in rng.integers(0, [height, width], size=(12, 2))]
    mask = _mask(height, width, pixels)
    patch_set = build_patch_grid(_image(height, width), mask, size)

    assert len(patch_set.patches) == (height // size) * (width // size)
    expected = 0
    for row in range(height // size):
        for col in range(width // size):
            cell = mask.raw[0, row * size : (row + 1) * size, col * size : (col + 1) * size]
            expected += int(cell.sum() > 0)
    assert patch_set.positive_count() == expected


def test_grid_errors():
    with pytest.raises(PatchGridError, match="dimension mismatch"):
        build_patch_grid(_image(32, 32), _mask(16, 32), 16)
    with pytest.raises(PatchGridError):
        build_patch_grid(_image(8, 32), _mask(8, 32), 16)


def test_mask_values_outside_zero_one_rejected():
    raw = np.zeros((1, 32, 32), dtype=np.uint16)
    raw[0, 3, 3] = 255
    mask = raster_from_raw(raw, ["mask"], full_scale=255)
    with pytest.raises(PatchGridError, match=r"0 or 1, found \[255\]"):
        build_patch_grid(_image(32, 32), mask, 16)


def test_extract_patch_windows():
    raw = np.arange(2 * 32 * 32, dtype=np.uint16).reshape(2, 32, 32)
    raster = raster_from_raw(raw, ["A", "B"])

    whole = extract_patch(raster, (0, 0), 32)
    np.testing.assert_array_equal(whole.data, raster.data)

    cell = extract_patch(raster, (16, 0), 16)
    np.testing.assert_array_equal(cell.raw, raw[:, 0:16, 16:32])

    with pytest.raises(PatchGridError, match="out-of-bounds"):
        extract_patch(raster, (20, 20), 16)


def test_patch_set_file(tmp_path):
    patch_set = LabeledPatchSet(
        patch_size=16,
        width=32,
        height=16,
        patches=[Patch(0, 0, POSITIVE, "scene"), Patch(16, 0, NEGATIVE, "scene")],
    )
    path = save_patch_set(patch_set, str(tmp_path / "patches.json"), config={"seed": 7})
    loaded = load_patch_set(path)

    assert loaded.patch_size == 16
    assert [(p.x, p.y, p.label) for p in loaded.patches] == [(0, 0, POSITIVE), (16, 0, NEGATIVE)]
    assert list(loaded.labels()) == [1, -1]
