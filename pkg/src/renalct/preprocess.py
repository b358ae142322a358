"""Slice preprocessing: HU windowing, spatial standardization to 512x512,
and min-max normalization to [-1, 1].

Pipeline order is clip -> crop/pad -> normalize, so padding happens in HU
space. The default pad value is the window's lower bound (which normalizes
to -1, i.e. background-like); literal HU 0 is available via ``pad_value``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .schema import SliceRef

TARGET_SIZE = 512

# Abdominal soft-tissue window.
DEFAULT_WINDOW_LEVEL = 50.0
DEFAULT_WINDOW_WIDTH = 400.0


@dataclass(frozen=True)
class WindowSpec:
    level: float = DEFAULT_WINDOW_LEVEL
    width: float = DEFAULT_WINDOW_WIDTH

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigError(f"window width must be positive, got {self.width}")

    @property
    def lo(self) -> float:
        return self.level - self.width / 2

    @property
    def hi(self) -> float:
        return self.level + self.width / 2


@dataclass(frozen=True)
class SliceImage:
    """512x512 grid of normalized values in [-1, 1] with provenance."""

    grid: np.ndarray
    window: WindowSpec
    spatial_op: str  # "none" | "center_crop" | "zero_pad" | "crop_and_pad"
    source: SliceRef | None = None

    def __post_init__(self):
        if self.grid.shape != (TARGET_SIZE, TARGET_SIZE):
            raise DataError(f"SliceImage must be {TARGET_SIZE}x{TARGET_SIZE}, got {self.grid.shape}")
        lo, hi = float(self.grid.min()), float(self.grid.max())
        if lo < -1.0 - 1e-9 or hi > 1.0 + 1e-9:
            raise DataError(f"SliceImage values outside [-1, 1]: [{lo}, {hi}]")


def window_clip(hu_grid: np.ndarray, window: WindowSpec) -> np.ndarray:
    """Clip HU values into [window.lo, window.hi]; in-window values unchanged."""
    grid = np.asarray(hu_grid, dtype=np.float64)
    if np.isnan(grid).any():
        r, c = map(int, np.argwhere(np.isnan(grid))[0])
        raise DataError(f"NaN HU value at pixel ({r}, {c})")
    return np.clip(grid, window.lo, window.hi)


def normalize(clipped: np.ndarray, window: WindowSpec) -> np.ndarray:
    """Affine map [lo, hi] -> [-1, 1]; requires inputs already windowed."""
    grid = np.asarray(clipped, dtype=np.float64)
    if grid.size and (grid.min() < window.lo - 1e-9 or grid.max() > window.hi + 1e-9):
        raise DataError(
            f"normalize: values outside window [{window.lo}, {window.hi}]; "
            "apply window_clip first"
        )
    return 2.0 * (grid - window.lo) / (window.hi - window.lo) - 1.0


def denormalize(normalized: np.ndarray, window: WindowSpec) -> np.ndarray:
    """Inverse of normalize; exact up to float rounding."""
    grid = np.asarray(normalized, dtype=np.float64)
    return (grid + 1.0) / 2.0 * (window.hi - window.lo) + window.lo


def _crop_axis(size: int, target: int) -> tuple[int, int]:
    # Returns (start, stop); odd remainders cut the extra row/col from the end.
    excess = size - target
    start = excess // 2
    return start, start + target


def _pad_axis(size: int, target: int) -> tuple[int, int]:
    # Returns (before, after); odd remainders pad the extra row/col at the end.
    deficit = target - size
    before = deficit // 2
    return before, deficit - before


def spatial_standardize(
    grid: np.ndarray, target: int = TARGET_SIZE, pad_value: float = 0.0
) -> tuple[np.ndarray, str]:
    """Center-crop and/or pad each axis independently to target x target."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise DataError(f"expected a non-empty 2D grid, got shape {grid.shape}")

    cropped = False
    padded = False
    for axis in (0, 1):
        if grid.shape[axis] > target:
            start, stop = _crop_axis(grid.shape[axis], target)
            grid = grid[start:stop] if axis == 0 else grid[:, start:stop]
            cropped = True
    pads = []
    for axis in (0, 1):
        if grid.shape[axis] < target:
            pads.append(_pad_axis(grid.shape[axis], target))
            padded = True
        else:
            pads.append((0, 0))
    if padded:
        grid = np.pad(grid, pads, mode="constant", constant_values=pad_value)

    if cropped and padded:
        op = "crop_and_pad"
    elif cropped:
        op = "center_crop"
    elif padded:
        op = "zero_pad"
    else:
        op = "none"
    return grid, op


def preprocess_slice(raw, window: WindowSpec, pad_in_hu: float | None = None) -> SliceImage:
    """window_clip -> spatial_standardize -> normalize.

    ``raw`` is an ingest RawSlice (or anything with .hu_grid and .ref).
    ``pad_in_hu`` overrides the pad value; default is the window lower bound.
    """
    pad = window.lo if pad_in_hu is None else pad_in_hu
    clipped = window_clip(raw.hu_grid, window)
    standardized, op = spatial_standardize(clipped, pad_value=pad)
    return SliceImage(
        grid=normalize(standardized, window),
        window=window,
        spatial_op=op,
        source=getattr(raw, "ref", None),
    )


# ---------------------------------------------------------------------------
# Tensor export: row-major little-endian float32 with a JSON sidecar. This is
# the prediction-file-side contract external detector trainers consume.
# ---------------------------------------------------------------------------


def save_tensor(
    grid: np.ndarray, path: str | Path, annotation_id: str, window: WindowSpec | None
) -> None:
    path = Path(path)
    data = np.ascontiguousarray(grid, dtype="<f4")
    path.write_bytes(data.tobytes())
    sidecar = {
        "rows": int(grid.shape[0]),
        "cols": int(grid.shape[1]),
        "window": (
            {"level": window.level, "width": window.width} if window is not None else None
        ),
        "annotation_id": annotation_id,
    }
    path.with_suffix(".json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_tensor(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise DataError(f"missing tensor sidecar: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    rows, cols = sidecar["rows"], sidecar["cols"]
    raw = path.read_bytes()
    expected = rows * cols * struct.calcsize("<f")
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    grid = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float64)
    return grid, sidecar
