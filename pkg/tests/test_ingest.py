import random
import shutil
import struct

import numpy as np
import pytest

from renalct.dicomio import (
    TAG_SLICE_LOCATION,
    format_ds,
    read_ct_slice,
    write_ct_slice,
)
from renalct.errors import DataError
from renalct.ingest import adjacent_indices, export_png, load_series, resolve_slice
from renalct.phantom import PhantomConfig, export_case_dicom, read_corner_marker, sample_cohort
from renalct.schema import Plane, SliceRef


def _write_slice(path, location, instance=1, stored_value=0, shape=(8, 8), **kwargs):
    stored = np.full(shape, stored_value, dtype=np.uint16)
    write_ct_slice(
        path, stored,
        slice_location=location, instance_number=instance, series_number=4, **kwargs
    )


# -- dicomio ------------------------------------------------------------------


def test_dicom_round_trip(tmp_path):
    path = tmp_path / "s.dcm"
    stored = np.arange(64, dtype=np.uint16).reshape(8, 8)
    write_ct_slice(
        path, stored,
        slice_location=12.5, instance_number=3, series_number=4,
        pixel_spacing_mm=(0.78125, 0.78125), patient_id="P7",
    )
    s = read_ct_slice(path)
    np.testing.assert_array_equal(s.stored, stored)
    assert s.slice_location == 12.5
    assert s.instance_number == 3
    assert s.series_number == 4
    assert s.pixel_spacing == (0.78125, 0.78125)
    assert s.rescale_slope == 1.0
    assert s.rescale_intercept == -1024.0
    assert s.patient_id == "P7"


def test_not_dicom_rejected(tmp_path):
    path = tmp_path / "s.dcm"
    path.write_bytes(b"\x00" * 200)
    with pytest.raises(DataError, match="DICM"):
        read_ct_slice(path)


def test_missing_attribute_names_file_and_attribute(tmp_path):
    path = tmp_path / "s.dcm"
    _write_slice(path, location=1.0)
    data = bytearray(path.read_bytes())
    # Blank out the SliceLocation tag so the parser skips it as unknown.
    needle = struct.pack("<HH", *TAG_SLICE_LOCATION)
    idx = data.find(needle, 132)
    assert idx > 0
    data[idx : idx + 4] = struct.pack("<HH", 0x0021, 0x1041)
    path.write_bytes(bytes(data))
    with pytest.raises(DataError) as err:
        read_ct_slice(path)
    assert "SliceLocation" in str(err.value)
    assert path.name in str(err.value)


def test_truncated_element_rejected(tmp_path):
    path = tmp_path / "s.dcm"
    _write_slice(path, location=1.0)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(DataError, match="PixelData holds|truncated"):
        read_ct_slice(path)


def test_format_ds_is_compact():
    assert format_ds(-1024.0) == "-1024"
    assert format_ds(0.78125) == "0.78125"
    assert format_ds(3.0) == "3"


# -- load_series / resolve_slice ----------------------------------------------


def test_sorted_ascending_by_slice_location(tmp_path):
    for name, loc in [("a.dcm", 12.0), ("b.dcm", 10.0), ("c.dcm", 11.0)]:
        _write_slice(tmp_path / name, loc)
    volume = load_series(tmp_path)
    assert [s.slice_location for s in volume.slices] == [10.0, 11.0, 12.0]


def test_descending_flag_reverses_order(tmp_path):
    for name, loc in [("a.dcm", 12.0), ("b.dcm", 10.0), ("c.dcm", 11.0)]:
        _write_slice(tmp_path / name, loc)
    volume = load_series(tmp_path, descending=True)
    assert [s.slice_location for s in volume.slices] == [12.0, 11.0, 10.0]


def test_ties_break_by_instance_then_filename(tmp_path):
    _write_slice(tmp_path / "z.dcm", 5.0, instance=2)
    _write_slice(tmp_path / "a.dcm", 5.0, instance=1)
    _write_slice(tmp_path / "m.dcm", 5.0, instance=2)
    volume = load_series(tmp_path)
    names = [s.path.name for s in volume.slices]
    assert names == ["a.dcm", "m.dcm", "z.dcm"]


def test_water_hu_identity(tmp_path):
    _write_slice(tmp_path / "s.dcm", 0.0, stored_value=1024)
    volume = load_series(tmp_path)
    raw = resolve_slice(volume, SliceRef(4, 1))
    assert np.all(raw.hu_grid == 0.0)


def test_inconsistent_dims_rejected(tmp_path):
    _write_slice(tmp_path / "a.dcm", 1.0, shape=(8, 8))
    _write_slice(tmp_path / "b.dcm", 2.0, shape=(16, 16))
    with pytest.raises(DataError, match="differs from series"):
        load_series(tmp_path)


def test_empty_directory_rejected(tmp_path):
    with pytest.raises(DataError, match="no files"):
        load_series(tmp_path)


def test_resolve_out_of_range_carries_index_and_size(tmp_path):
    _write_slice(tmp_path / "a.dcm", 1.0)
    volume = load_series(tmp_path)
    with pytest.raises(DataError, match="2.*1-slice"):
        resolve_slice(volume, SliceRef(4, 2))


def test_resolve_first_and_last(tmp_path):
    for i, loc in enumerate([3.0, 1.0, 2.0], start=1):
        _write_slice(tmp_path / f"{i}.dcm", loc, instance=i)
    volume = load_series(tmp_path)
    assert resolve_slice(volume, SliceRef(4, 1)).slice_location == 1.0
    assert resolve_slice(volume, SliceRef(4, 3)).slice_location == 3.0


def test_shuffle_invariance(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    rng = random.Random(11)
    locations = [float(i) for i in range(12)]
    rng.shuffle(locations)
    for i, loc in enumerate(locations):
        _write_slice(src / f"f{i:02d}.dcm", loc, instance=i + 1, stored_value=int(loc))
    baseline = resolve_slice(load_series(src), SliceRef(4, 5)).hu_grid

    for trial in range(3):
        shuffled = tmp_path / f"trial{trial}"
        shuffled.mkdir()
        names = [p.name for p in src.iterdir()]
        rng.shuffle(names)
        for new_idx, name in enumerate(names):
            shutil.copy(src / name, shuffled / f"r{new_idx:02d}.dcm")
        np.testing.assert_array_equal(
            resolve_slice(load_series(shuffled), SliceRef(4, 5)).hu_grid, baseline
        )


# -- adjacent_indices -----------------------------------------------------------


def _volume_of(tmp_path, n):
    for i in range(1, n + 1):
        _write_slice(tmp_path / f"{i:03d}.dcm", float(i), instance=i)
    return load_series(tmp_path)


def test_adjacent_center_and_boundaries(tmp_path):
    volume = _volume_of(tmp_path, 9)
    assert adjacent_indices(volume, 5) == [4, 5, 6]
    assert adjacent_indices(volume, 1) == [1, 2]
    assert adjacent_indices(volume, 9) == [8, 9]
    assert adjacent_indices(volume, 5, offsets=(-2, 2)) == [3, 5, 7]
    with pytest.raises(DataError):
        adjacent_indices(volume, 10)


def test_adjacent_always_contains_center(tmp_path):
    volume = _volume_of(tmp_path, 3)
    for idx in (1, 2, 3):
        result = adjacent_indices(volume, idx)
        assert idx in result
        assert 1 <= len(result) <= 3


# -- phantom-exported series ----------------------------------------------------


def test_phantom_40_slice_series_round_trip(tmp_path):
    cfg = PhantomConfig(n_annotations=1, seed=3, slices_per_volume=40, grid_size=512)
    _, cases = sample_cohort(cfg)
    series = export_case_dicom(cases[0], tmp_path)
    volume = load_series(series)
    assert len(volume) == 40
    assert (volume.rows, volume.cols) == (512, 512)


def test_series4_image167_marker_on_300_slice_volume(tmp_path):
    cfg = PhantomConfig(n_annotations=1, seed=5, slices_per_volume=300, grid_size=64)
    _, cases = sample_cohort(cfg)
    series = export_case_dicom(cases[0], tmp_path)
    volume = load_series(series)
    raw = resolve_slice(volume, SliceRef(series_number=4, image_number=167))
    assert read_corner_marker(raw.hu_grid) == 167


def test_export_png_16bit(tmp_path):
    from PIL import Image

    _write_slice(tmp_path / "s.dcm", 1.0, stored_value=2024, shape=(16, 16))
    volume = load_series(tmp_path)
    raw = resolve_slice(volume, SliceRef(4, 1, Plane.CORONAL))
    path = export_png(raw, tmp_path / "png", "R0001")
    assert path.name == "R0001_4_1.png"
    img = Image.open(path)
    assert np.asarray(img).max() == 2024  # HU 1000 stored back as HU + 1024
