"""Synthetic renal cohort generator: CT-like volumes with known lesions,
ground-truth FeatureSets, and grammar sentences, so every pipeline stage is
testable without clinical data.

HU bands are named constants chosen only to satisfy ordering invariants
(hypo < kidney < hyper, iso == kidney); no radiological realism is claimed.
Ground truth is sampled fully, then masked to "unknown" per the configured
missingness rates, so oracle tests can reach the unmasked values while
manifests reflect realistic incompleteness. All randomness derives from
(seed, case index), so parallel generation cannot change output.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import stub_generate
from .dicomio import write_ct_slice
from .errors import ConfigError, DataError
from .schema import (
    Annotation,
    Attenuation,
    CohortManifest,
    Enhancement,
    FeatureSet,
    GrowthPattern,
    Plane,
    Position,
    SliceRef,
    feature_set_from_dict,
    feature_set_to_dict,
)

# HU bands.
HU_AIR = -1000.0
HU_BODY = 40.0
HU_KIDNEY = 120.0
HU_LESION = {
    Attenuation.HYPO: 10.0,
    Attenuation.HYPER: 220.0,
    Attenuation.ISO: HU_KIDNEY,
}
# Corner marker: 4x4 block at (0..3, 0..3) storing HU 1000 + slice index.
MARKER_HU_BASE = 1000.0

# Geometry in pixels on the default 512 grid (scaled for other grid sizes).
BODY_SEMI_AXES = (230.0, 245.0)
KIDNEY_SEMI_AXES = (90.0, 60.0)
KIDNEY_CENTER_COL_OFFSET = 96.0  # patient-left kidney renders right of center
LESION_ASPECT = 0.75  # col semi-axis / row semi-axis
ADJACENT_LESION_SCALE = 0.9  # lesion shrink on the +-1 neighbor slices

SIZE_MIN_CM = 0.2
SIZE_MAX_CM = 7.0
SIZE_MAX_ENDOPHYTIC_CM = 4.0

# Lognormal parameters fit to mean 1.71 cm, sd 1.20 cm.
_SIZE_SD = 1.20
_SIZE_MEAN = 1.71
_SIZE_SIGMA2 = math.log(1.0 + (_SIZE_SD / _SIZE_MEAN) ** 2)
_SIZE_MU = math.log(_SIZE_MEAN) - _SIZE_SIGMA2 / 2.0
_SIZE_SIGMA = math.sqrt(_SIZE_SIGMA2)

# Cohort marginals mirroring the 130-annotation label distribution.
DEFAULT_MARGINALS: dict[str, dict[str, float]] = {
    "position": {"left": 61 / 130, "right": 68 / 130, "unknown": 1 / 130},
    "exophytic": {"exophytic": 26 / 130, "endophytic": 2 / 130, "unknown": 102 / 130},
    "attenuation": {
        "hypoattenuating": 43 / 130,
        "hyperattenuating": 30 / 130,
        "isoattenuating": 6 / 130,
        "unknown": 51 / 130,
    },
    "enhancement": {
        "enhancement": 26 / 130,
        "non_enhancement": 10 / 130,
        "unknown": 94 / 130,
    },
    "cyst": {"true": 78 / 130},
    "mass": {"true": 15 / 130},
    "tumor": {"true": 7 / 130},
    "size_cm": {"unknown": 18 / 130},
}


@dataclass(frozen=True)
class PhantomConfig:
    n_annotations: int = 130
    seed: int = 0
    fov_cm: float = 40.0
    grid_size: int = 512
    slices_per_volume: int = 5
    marginals: dict = field(default_factory=lambda: DEFAULT_MARGINALS)
    exact_marginals: bool = False

    def __post_init__(self):
        if self.n_annotations < 1:
            raise ConfigError("n_annotations must be >= 1")
        if self.grid_size < 16:
            raise ConfigError("grid_size must be >= 16")
        if self.slices_per_volume < 1:
            raise ConfigError("slices_per_volume must be >= 1")
        for feature, dist in self.marginals.items():
            total = sum(dist.values())
            if total > 1.0 + 1e-9 or any(p < 0 for p in dist.values()):
                raise ConfigError(
                    f"infeasible marginals for {feature}: probabilities sum to {total}"
                )

    @property
    def spacing_cm(self) -> float:
        return self.fov_cm / self.grid_size


@dataclass(frozen=True)
class PhantomCase:
    annotation: Annotation  # masked features, as curated manifests would carry
    truth: FeatureSet  # fully known ground truth
    lesion_center: tuple[float, float]  # (row, col) px, may be half-integer
    lesion_semi_axes: tuple[float, float]  # (row, col) px
    kidney_center: tuple[float, float]
    annotated_index: int  # 1-based slice index carrying the lesion
    n_slices: int
    grid_size: int
    spacing_cm: float
    case_seed: int


def _case_rng(seed: int, tag: int | str) -> random.Random:
    digest = hashlib.sha256(f"phantom|{seed}|{tag}".encode()).hexdigest()
    return random.Random(int(digest[:16], 16))


def _draw(rng: random.Random, dist: dict[str, float]) -> str | None:
    """Sample a value or None for the leftover mass."""
    x = rng.random()
    acc = 0.0
    for value, p in dist.items():
        acc += p
        if x < acc:
            return value
    return None


def _quota_values(dist: dict[str, float], n: int, leftover: str) -> list[str]:
    """Largest-remainder quota allocation of n draws over dist; probability
    mass not covered by dist goes to the ``leftover`` value."""
    full = dict(dist)
    full[leftover] = full.get(leftover, 0.0) + max(0.0, 1.0 - sum(dist.values()))
    raw = {v: p * n for v, p in full.items()}
    counts = {v: math.floor(x) for v, x in raw.items()}
    short = n - sum(counts.values())
    for v in sorted(full, key=lambda v: (raw[v] - counts[v], str(v)), reverse=True):
        if short <= 0:
            break
        counts[v] += 1
        short -= 1
    values: list[str] = []
    for v in sorted(counts, key=str):
        values += [v] * counts[v]
    return values


def _sample_size(rng: random.Random, endophytic: bool) -> float:
    size = rng.lognormvariate(_SIZE_MU, _SIZE_SIGMA)
    cap = SIZE_MAX_ENDOPHYTIC_CM if endophytic else SIZE_MAX_CM
    return round(min(max(size, SIZE_MIN_CM), cap), 2)


def sample_cohort(cfg: PhantomConfig) -> tuple[CohortManifest, list[PhantomCase]]:
    """Draw n cases per the configured marginals, deterministic under seed."""
    n = cfg.n_annotations
    m = cfg.marginals

    if cfg.exact_marginals:
        columns: dict[str, list] = {}
        for feature, dist in m.items():
            leftover = {"cyst": "false", "mass": "false", "tumor": "false",
                        "size_cm": "known"}.get(feature, "unknown")
            # Categorical marginals already include their unknown mass.
            values = _quota_values(dist, n, leftover)
            _case_rng(cfg.seed, f"column|{feature}").shuffle(values)
            columns[feature] = values
    else:
        columns = {}

    cases: list[PhantomCase] = []
    annotations: list[Annotation] = []
    for i in range(n):
        rng = _case_rng(cfg.seed, i)

        def pick(feature: str, default: str) -> str:
            if cfg.exact_marginals:
                return columns[feature][i] or default
            return _draw(rng, m[feature]) or default

        masked_position = pick("position", "unknown")
        masked_growth = pick("exophytic", "unknown")
        masked_atten = pick("attenuation", "unknown")
        masked_enh = pick("enhancement", "unknown")
        cyst = pick("cyst", "false") == "true"
        mass = pick("mass", "false") == "true"
        tumor = pick("tumor", "false") == "true"
        size_known = pick("size_cm", "known") != "unknown"

        # Truth behind the mask: renormalized over the known values.
        def truth_of(masked: str, dist: dict[str, float]) -> str:
            if masked != "unknown":
                return masked
            known = {v: p for v, p in dist.items() if v != "unknown"}
            total = sum(known.values())
            return _draw(rng, {v: p / total for v, p in known.items()}) or next(iter(known))

        true_position = truth_of(masked_position, m["position"])
        true_growth = truth_of(masked_growth, m["exophytic"])
        true_atten = truth_of(masked_atten, m["attenuation"])
        true_enh = truth_of(masked_enh, m["enhancement"])
        size = _sample_size(rng, true_growth == "endophytic")

        truth = FeatureSet(
            position=Position(true_position),
            raw_size=f"{_fmt_size(size)} cm",
            size_cm=size,
            exophytic=GrowthPattern(true_growth),
            attenuation=Attenuation(true_atten),
            enhancement=Enhancement(true_enh),
            cyst=cyst,
            mass=mass,
            tumor=tumor,
        )
        masked = FeatureSet(
            position=Position(masked_position),
            raw_size=f"{_fmt_size(size)} cm" if size_known else None,
            size_cm=size if size_known else None,
            exophytic=GrowthPattern(masked_growth),
            attenuation=Attenuation(masked_atten),
            enhancement=Enhancement(masked_enh),
            cyst=cyst,
            mass=mass,
            tumor=tumor,
        )

        n_slices = cfg.slices_per_volume
        annotated = 1 if n_slices < 3 else rng.randint(2, n_slices - 1)
        # A minority of patients contribute two annotations.
        patient_index = i - 1 if i % 5 == 4 else i
        annotation = Annotation(
            annotation_id=f"phantom-{i:04d}",
            patient_id=f"P{patient_index:04d}",
            report_id=f"R{i:04d}",
            sentence=stub_generate(masked),
            slice=SliceRef(series_number=4, image_number=annotated, plane=Plane.CORONAL),
            features=masked,
        )
        annotations.append(annotation)
        cases.append(
            _with_geometry(
                annotation, truth, annotated, n_slices, cfg,
                case_seed=rng.randint(0, 2**31 - 1),
            )
        )
    manifest = CohortManifest(annotations=annotations, provenance="phantom")
    return manifest, cases


def _fmt_size(size: float) -> str:
    return f"{size:.2f}".rstrip("0").rstrip(".")


def _with_geometry(
    annotation, truth, annotated, n_slices, cfg: PhantomConfig, case_seed: int
) -> PhantomCase:
    scale = cfg.grid_size / 512.0
    center = cfg.grid_size / 2.0
    kidney_col = center + (
        KIDNEY_CENTER_COL_OFFSET * scale
        if truth.position == Position.LEFT
        else -KIDNEY_CENTER_COL_OFFSET * scale
    )
    kidney_center = (center, kidney_col)
    kidney_semi = (KIDNEY_SEMI_AXES[0] * scale, KIDNEY_SEMI_AXES[1] * scale)

    semi_row = truth.size_cm / cfg.spacing_cm / 2.0
    semi_col = semi_row * LESION_ASPECT
    if semi_row >= min(cfg.grid_size / 2.0 - 2, BODY_SEMI_AXES[0] * scale):
        raise DataError(
            f"{annotation.annotation_id}: lesion of {truth.size_cm} cm overflows the field of view"
        )

    if truth.exophytic == GrowthPattern.ENDOPHYTIC:
        base_row = kidney_center[0]
    else:
        # Exophytic (and unknown-growth) lesions sit on the superior pole.
        base_row = kidney_center[0] - kidney_semi[0]
    # Half-pixel placement keeps the measured pixel diameter within half a
    # pixel of the requested size (impossible with integer centers alone).
    frac = semi_row - math.floor(semi_row)
    offset = 0.0 if 0.25 <= frac < 0.75 else 0.5
    lesion_center = (math.floor(base_row) + offset, round(kidney_col))

    return PhantomCase(
        annotation=annotation,
        truth=truth,
        lesion_center=lesion_center,
        lesion_semi_axes=(semi_row, semi_col),
        kidney_center=kidney_center,
        annotated_index=annotated,
        n_slices=n_slices,
        grid_size=cfg.grid_size,
        spacing_cm=cfg.spacing_cm,
        case_seed=case_seed,
    )


def _ellipse_mask(shape, center, semi_axes) -> np.ndarray:
    rows = np.arange(shape[0], dtype=np.float64)[:, None]
    cols = np.arange(shape[1], dtype=np.float64)[None, :]
    return ((rows - center[0]) / semi_axes[0]) ** 2 + (
        (cols - center[1]) / semi_axes[1]
    ) ** 2 <= 1.0


def lesion_mask(case: PhantomCase, scale: float = 1.0) -> np.ndarray:
    semi = (case.lesion_semi_axes[0] * scale, case.lesion_semi_axes[1] * scale)
    return _ellipse_mask((case.grid_size, case.grid_size), case.lesion_center, semi)


def render_slice(case: PhantomCase, slice_index: int | None = None) -> np.ndarray:
    """HU grid for one slice of the case's volume.

    The lesion appears on the annotated slice and, scaled down, on its two
    neighbors; every slice carries the corner index marker.
    """
    if slice_index is None:
        slice_index = case.annotated_index
    if not 1 <= slice_index <= case.n_slices:
        raise DataError(f"slice index {slice_index} outside volume of {case.n_slices}")

    size = case.grid_size
    scale = size / 512.0
    center = size / 2.0
    grid = np.full((size, size), HU_AIR, dtype=np.float64)

    body = _ellipse_mask(
        (size, size), (center, center),
        (BODY_SEMI_AXES[0] * scale, BODY_SEMI_AXES[1] * scale),
    )
    grid[body] = HU_BODY
    kidney_semi = (KIDNEY_SEMI_AXES[0] * scale, KIDNEY_SEMI_AXES[1] * scale)
    for col in (center - KIDNEY_CENTER_COL_OFFSET * scale,
                center + KIDNEY_CENTER_COL_OFFSET * scale):
        grid[_ellipse_mask((size, size), (center, col), kidney_semi)] = HU_KIDNEY

    delta = abs(slice_index - case.annotated_index)
    if delta <= 1:
        lesion_scale = 1.0 if delta == 0 else ADJACENT_LESION_SCALE
        hu = HU_LESION.get(case.truth.attenuation, HU_LESION[Attenuation.ISO])
        grid[lesion_mask(case, lesion_scale)] = hu

    grid[0:4, 0:4] = MARKER_HU_BASE + slice_index
    return grid


def read_corner_marker(hu_grid: np.ndarray) -> int:
    """Recover the slice index encoded by render_slice."""
    block = hu_grid[0:4, 0:4]
    if not np.all(block == block[0, 0]):
        raise DataError("corner marker block is not uniform")
    return int(round(float(block[0, 0]) - MARKER_HU_BASE))


def measure_lesion_diameter_cm(case: PhantomCase) -> float:
    """Largest pixel diameter of the rendered lesion, in cm (row axis)."""
    mask = lesion_mask(case)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return 0.0
    return float(rows[-1] - rows[0] + 1) * case.spacing_cm


def export_case_dicom(case: PhantomCase, out_dir: str | Path) -> Path:
    """Write the case's volume as a minimal DICOM series.

    Filenames are deliberately shuffled relative to slice order so consumers
    must sort by SliceLocation.
    """
    series_dir = Path(out_dir) / case.annotation.annotation_id
    series_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(case.case_seed)
    name_order = list(range(1, case.n_slices + 1))
    rng.shuffle(name_order)
    spacing_mm = case.spacing_cm * 10.0
    for file_pos, slice_index in enumerate(name_order, start=1):
        hu = render_slice(case, slice_index)
        stored = np.clip(hu + 1024.0, 0, 65535).astype(np.uint16)
        write_ct_slice(
            series_dir / f"img_{file_pos:03d}.dcm",
            stored,
            slice_location=slice_index * 3.0,
            instance_number=slice_index,
            series_number=case.annotation.slice.series_number,
            pixel_spacing_mm=(spacing_mm, spacing_mm),
            patient_id=case.annotation.patient_id,
            study_uid=f"2.25.{case.case_seed}.1",
            series_uid=f"2.25.{case.case_seed}.2",
            sop_instance_uid=f"2.25.{case.case_seed}.3.{slice_index}",
        )
    return series_dir


def save_truth(cases: list[PhantomCase], path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "annotation_id": c.annotation.annotation_id,
                "features": feature_set_to_dict(c.truth),
            },
            sort_keys=True,
        )
        for c in cases
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_truth(path: str | Path) -> dict[str, FeatureSet]:
    truth = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        truth[record["annotation_id"]] = feature_set_from_dict(record["features"])
    return truth
