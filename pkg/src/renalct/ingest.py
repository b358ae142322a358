"""DICOM series loading and slice-reference resolution.

A CtVolume keeps raw stored pixel values plus rescale metadata; Hounsfield
conversion happens exactly once, at resolve time, so a 300-slice series does
not sit in memory as float grids. Slices sort ascending by SliceLocation
(descending scanners handled via a flag), ties broken by InstanceNumber then
filename, which makes resolution invariant to file-listing order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dicomio import DicomSliceFile, read_ct_slice
from .errors import DataError
from .schema import SliceRef


@dataclass(frozen=True)
class CtVolume:
    slices: tuple[DicomSliceFile, ...]  # sorted; immutable after load
    rows: int
    cols: int
    descending: bool = False

    def __len__(self) -> int:
        return len(self.slices)


@dataclass(frozen=True)
class RawSlice:
    """One resolved slice in Hounsfield Units (rescale applied once here)."""

    hu_grid: np.ndarray
    ref: SliceRef
    slice_location: float
    instance_number: int
    pixel_spacing: tuple[float, float] | None


def load_series(directory: str | Path, descending: bool = False) -> CtVolume:
    """Load every DICOM file under ``directory`` into a sorted volume."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"series directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.is_file())
    if not files:
        raise DataError(f"no files in series directory: {directory}")

    slices = [read_ct_slice(p) for p in files]
    rows, cols = slices[0].rows, slices[0].cols
    for s in slices:
        if (s.rows, s.cols) != (rows, cols):
            raise DataError(
                f"{s.path}: grid {s.rows}x{s.cols} differs from series {rows}x{cols}"
            )
    slices.sort(
        key=lambda s: (
            -s.slice_location if descending else s.slice_location,
            s.instance_number,
            s.path.name,
        )
    )
    return CtVolume(slices=tuple(slices), rows=rows, cols=cols, descending=descending)


def resolve_slice(volume: CtVolume, ref: SliceRef) -> RawSlice:
    """Return the slice at 1-based position ``ref.image_number`` in sorted order."""
    if not 1 <= ref.image_number <= len(volume):
        raise DataError(
            f"image_number {ref.image_number} out of range for a "
            f"{len(volume)}-slice volume"
        )
    s = volume.slices[ref.image_number - 1]
    hu = s.stored.astype(np.float64) * s.rescale_slope + s.rescale_intercept
    return RawSlice(
        hu_grid=hu,
        ref=ref,
        slice_location=s.slice_location,
        instance_number=s.instance_number,
        pixel_spacing=s.pixel_spacing,
    )


def adjacent_indices(
    volume: CtVolume, index: int, offsets: tuple[int, ...] = (-1, 1)
) -> list[int]:
    """The center index plus in-range offset indices, in slice order.

    Out-of-range offsets are dropped (never clamped), so boundary slices
    yield shorter lists instead of duplicates.
    """
    if not 1 <= index <= len(volume):
        raise DataError(f"index {index} out of range for a {len(volume)}-slice volume")
    result = []
    for off in sorted(set(offsets) | {0}):
        candidate = index + off
        if 1 <= candidate <= len(volume):
            result.append(candidate)
    return result


def export_png(raw: RawSlice, out_dir: str | Path, report_id: str) -> Path:
    """16-bit grayscale PNG for inspection; HU mapped via stored = HU + 1024."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = f"{report_id}_{raw.ref.series_number}_{raw.ref.image_number}.png"
    path = out_dir / name
    stored = np.clip(raw.hu_grid + 1024.0, 0, 65535).astype(np.uint16)
    Image.fromarray(stored).save(path)  # uint16 -> 16-bit grayscale
    return path
