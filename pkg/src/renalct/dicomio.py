"""Minimal DICOM part-10 reader/writer.

Covers exactly what the ingest contract needs: single-frame monochrome CT
slices in explicit or implicit VR little endian, uncompressed. The writer
always emits explicit VR little endian. Encapsulated transfer syntaxes and
sequences with undefined length are rejected, not mishandled.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"DICM"
TRANSFER_SYNTAX_EXPLICIT_LE = "1.2.840.10008.1.2.1"
TRANSFER_SYNTAX_IMPLICIT_LE = "1.2.840.10008.1.2"
CT_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.2"
IMPLEMENTATION_CLASS_UID = "2.25.93209270935207201615614319341818394664"

# Tags the pipeline consumes.
TAG_SOP_CLASS = (0x0008, 0x0016)
TAG_SOP_INSTANCE = (0x0008, 0x0018)
TAG_MODALITY = (0x0008, 0x0060)
TAG_PATIENT_ID = (0x0010, 0x0020)
TAG_STUDY_UID = (0x0020, 0x000D)
TAG_SERIES_UID = (0x0020, 0x000E)
TAG_SERIES_NUMBER = (0x0020, 0x0011)
TAG_INSTANCE_NUMBER = (0x0020, 0x0013)
TAG_SLICE_LOCATION = (0x0020, 0x1041)
TAG_SAMPLES_PER_PIXEL = (0x0028, 0x0002)
TAG_PHOTOMETRIC = (0x0028, 0x0004)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLS = (0x0028, 0x0011)
TAG_PIXEL_SPACING = (0x0028, 0x0030)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_BITS_STORED = (0x0028, 0x0101)
TAG_HIGH_BIT = (0x0028, 0x0102)
TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
TAG_RESCALE_SLOPE = (0x0028, 0x1053)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)

_LONG_LENGTH_VRS = {b"OB", b"OW", b"OF", b"SQ", b"UT", b"UN"}


def _pad_even(value: bytes, pad: bytes) -> bytes:
    return value + pad if len(value) % 2 else value


def _encode_explicit(tag: tuple[int, int], vr: bytes, value: bytes) -> bytes:
    head = struct.pack("<HH", tag[0], tag[1]) + vr
    if vr in _LONG_LENGTH_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(value)) + value
    return head + struct.pack("<H", len(value)) + value


def _str_element(tag, vr: bytes, text: str) -> bytes:
    pad = b"\x00" if vr == b"UI" else b" "
    return _encode_explicit(tag, vr, _pad_even(text.encode("ascii"), pad))


def _us_element(tag, value: int) -> bytes:
    return _encode_explicit(tag, b"US", struct.pack("<H", value))


def format_ds(value: float) -> str:
    """Decimal string: fixed-point, trimmed, <= 16 chars."""
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return text if text else "0"


@dataclass
class DicomSliceFile:
    """Decoded attributes of one CT slice file."""

    path: Path
    rows: int
    cols: int
    stored: np.ndarray  # raw stored values, shape (rows, cols)
    slice_location: float
    instance_number: int
    series_number: int
    rescale_slope: float
    rescale_intercept: float
    pixel_spacing: tuple[float, float] | None
    patient_id: str


def write_ct_slice(
    path: str | Path,
    stored: np.ndarray,
    *,
    slice_location: float,
    instance_number: int,
    series_number: int,
    rescale_slope: float = 1.0,
    rescale_intercept: float = -1024.0,
    pixel_spacing_mm: tuple[float, float] | None = None,
    patient_id: str = "PHANTOM",
    study_uid: str = "2.25.1",
    series_uid: str = "2.25.2",
    sop_instance_uid: str = "2.25.3",
) -> None:
    """Write one unsigned-16-bit monochrome slice, explicit VR little endian."""
    stored = np.ascontiguousarray(stored, dtype="<u2")
    if stored.ndim != 2:
        raise DataError(f"pixel grid must be 2D, got shape {stored.shape}")
    rows, cols = stored.shape

    meta_body = b"".join(
        [
            _encode_explicit((0x0002, 0x0001), b"OB", b"\x00\x01"),
            _str_element((0x0002, 0x0002), b"UI", CT_IMAGE_STORAGE),
            _str_element((0x0002, 0x0003), b"UI", sop_instance_uid),
            _str_element((0x0002, 0x0010), b"UI", TRANSFER_SYNTAX_EXPLICIT_LE),
            _str_element((0x0002, 0x0012), b"UI", IMPLEMENTATION_CLASS_UID),
        ]
    )
    meta = _encode_explicit((0x0002, 0x0000), b"UL", struct.pack("<I", len(meta_body)))
    meta += meta_body

    elements = [
        _str_element(TAG_SOP_CLASS, b"UI", CT_IMAGE_STORAGE),
        _str_element(TAG_SOP_INSTANCE, b"UI", sop_instance_uid),
        _str_element(TAG_MODALITY, b"CS", "CT"),
        _str_element(TAG_PATIENT_ID, b"LO", patient_id),
        _str_element(TAG_STUDY_UID, b"UI", study_uid),
        _str_element(TAG_SERIES_UID, b"UI", series_uid),
        _str_element(TAG_SERIES_NUMBER, b"IS", str(series_number)),
        _str_element(TAG_INSTANCE_NUMBER, b"IS", str(instance_number)),
        _str_element(TAG_SLICE_LOCATION, b"DS", format_ds(slice_location)),
        _us_element(TAG_SAMPLES_PER_PIXEL, 1),
        _str_element(TAG_PHOTOMETRIC, b"CS", "MONOCHROME2"),
        _us_element(TAG_ROWS, rows),
        _us_element(TAG_COLS, cols),
    ]
    if pixel_spacing_mm is not None:
        spacing = f"{format_ds(pixel_spacing_mm[0])}\\{format_ds(pixel_spacing_mm[1])}"
        elements.append(_str_element(TAG_PIXEL_SPACING, b"DS", spacing))
    elements += [
        _us_element(TAG_BITS_ALLOCATED, 16),
        _us_element(TAG_BITS_STORED, 16),
        _us_element(TAG_HIGH_BIT, 15),
        _us_element(TAG_PIXEL_REPRESENTATION, 0),
        _str_element(TAG_RESCALE_INTERCEPT, b"DS", format_ds(rescale_intercept)),
        _str_element(TAG_RESCALE_SLOPE, b"DS", format_ds(rescale_slope)),
        _encode_explicit(TAG_PIXEL_DATA, b"OW", stored.tobytes()),
    ]
    Path(path).write_bytes(b"\x00" * 128 + MAGIC + meta + b"".join(elements))


class _Parser:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.path = path
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"{self.path}: truncated DICOM element at offset {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def read_element(self, explicit: bool) -> tuple[tuple[int, int], bytes]:
        group, elem = struct.unpack("<HH", self._take(4))
        if explicit:
            vr = self._take(2)
            if vr in _LONG_LENGTH_VRS:
                self._take(2)
                (length,) = struct.unpack("<I", self._take(4))
            else:
                (length,) = struct.unpack("<H", self._take(2))
        else:
            (length,) = struct.unpack("<I", self._take(4))
        if length == 0xFFFFFFFF:
            raise DataError(
                f"{self.path}: undefined-length element "
                f"({group:04X},{elem:04X}) is not supported"
            )
        return (group, elem), self._take(length)


def _parse_elements(data: bytes, path: Path) -> dict[tuple[int, int], bytes]:
    parser = _Parser(data, path)
    elements: dict[tuple[int, int], bytes] = {}

    # File meta group is always explicit VR little endian.
    while parser.pos < len(data):
        group = struct.unpack_from("<H", data, parser.pos)[0]
        if group != 0x0002:
            break
        tag, value = parser.read_element(explicit=True)
        elements[tag] = value

    syntax = elements.get((0x0002, 0x0010), b"").rstrip(b"\x00 ").decode("ascii", "replace")
    if syntax == TRANSFER_SYNTAX_EXPLICIT_LE or syntax == "":
        explicit = True
    elif syntax == TRANSFER_SYNTAX_IMPLICIT_LE:
        explicit = False
    else:
        raise DataError(f"{path}: unsupported transfer syntax {syntax!r}")

    while parser.pos < len(data):
        tag, value = parser.read_element(explicit=explicit)
        elements[tag] = value
    return elements


def _require(elements: dict, tag: tuple[int, int], name: str, path: Path) -> bytes:
    if tag not in elements:
        raise DataError(f"{path}: missing required attribute {name}")
    return elements[tag]


def _text(raw: bytes) -> str:
    return raw.rstrip(b"\x00 ").decode("ascii", "replace").strip()


def read_ct_slice(path: str | Path) -> DicomSliceFile:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 132 or data[128:132] != MAGIC:
        raise DataError(f"{path}: not a DICOM part-10 file (missing DICM marker)")
    elements = _parse_elements(data[132:], path)

    rows = struct.unpack("<H", _require(elements, TAG_ROWS, "Rows", path))[0]
    cols = struct.unpack("<H", _require(elements, TAG_COLS, "Columns", path))[0]
    slice_location = float(_text(_require(elements, TAG_SLICE_LOCATION, "SliceLocation", path)))
    slope = float(_text(_require(elements, TAG_RESCALE_SLOPE, "RescaleSlope", path)))
    intercept = float(
        _text(_require(elements, TAG_RESCALE_INTERCEPT, "RescaleIntercept", path))
    )
    pixel_data = _require(elements, TAG_PIXEL_DATA, "PixelData", path)

    bits = 16
    if TAG_BITS_ALLOCATED in elements:
        bits = struct.unpack("<H", elements[TAG_BITS_ALLOCATED])[0]
    if bits != 16:
        raise DataError(f"{path}: only 16-bit pixel data is supported, got {bits}")
    signed = False
    if TAG_PIXEL_REPRESENTATION in elements:
        signed = struct.unpack("<H", elements[TAG_PIXEL_REPRESENTATION])[0] == 1

    expected = rows * cols * 2
    if len(pixel_data) < expected:
        raise DataError(f"{path}: PixelData holds {len(pixel_data)} bytes, expected {expected}")
    dtype = "<i2" if signed else "<u2"
    stored = np.frombuffer(pixel_data[:expected], dtype=dtype).reshape(rows, cols)

    instance_number = 0
    if TAG_INSTANCE_NUMBER in elements:
        instance_number = int(_text(elements[TAG_INSTANCE_NUMBER]) or 0)
    series_number = 0
    if TAG_SERIES_NUMBER in elements:
        series_number = int(_text(elements[TAG_SERIES_NUMBER]) or 0)
    spacing = None
    if TAG_PIXEL_SPACING in elements:
        parts = _text(elements[TAG_PIXEL_SPACING]).split("\\")
        if len(parts) == 2:
            spacing = (float(parts[0]), float(parts[1]))

    return DicomSliceFile(
        path=path,
        rows=rows,
        cols=cols,
        stored=stored,
        slice_location=slice_location,
        instance_number=instance_number,
        series_number=series_number,
        rescale_slope=slope,
        rescale_intercept=intercept,
        pixel_spacing=spacing,
        patient_id=_text(elements.get(TAG_PATIENT_ID, b"")),
    )
