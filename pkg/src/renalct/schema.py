"""Clinical feature schema, annotation records, and JSONL serialization.

A FeatureSet is the eight-feature renal abnormality record. The five
non-boolean features keep an explicit ``unknown`` token rather than a missing
field; the three lesion-type booleans default to false. An Annotation ties a
report sentence, a FeatureSet, and a CT slice reference together, and a
CohortManifest is an ordered list of annotations with provenance.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import DataError

SCHEMA_VERSION = "1"


class Position(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UNKNOWN = "unknown"


class GrowthPattern(str, Enum):
    EXOPHYTIC = "exophytic"
    ENDOPHYTIC = "endophytic"
    UNKNOWN = "unknown"


class Attenuation(str, Enum):
    HYPO = "hypoattenuating"
    HYPER = "hyperattenuating"
    ISO = "isoattenuating"
    UNKNOWN = "unknown"


class Enhancement(str, Enum):
    ENHANCEMENT = "enhancement"
    NON_ENHANCEMENT = "non_enhancement"
    UNKNOWN = "unknown"


class Plane(str, Enum):
    CORONAL = "coronal"
    AXIAL = "axial"
    SAGITTAL = "sagittal"
    UNKNOWN = "unknown"


# The eight scored features, in report-table order.
FEATURE_NAMES = (
    "position",
    "exophytic",
    "attenuation",
    "enhancement",
    "cyst",
    "mass",
    "tumor",
    "size_cm",
)

CATEGORICAL_FEATURES = ("position", "exophytic", "attenuation", "enhancement")
BOOLEAN_FEATURES = ("cyst", "mass", "tumor")

_ENUM_BY_FEATURE = {
    "position": Position,
    "exophytic": GrowthPattern,
    "attenuation": Attenuation,
    "enhancement": Enhancement,
}


@dataclass(frozen=True)
class FeatureSet:
    """One lesion's structured features; immutable value record."""

    position: Position = Position.UNKNOWN
    raw_size: str | None = None
    size_cm: float | None = None
    exophytic: GrowthPattern = GrowthPattern.UNKNOWN
    attenuation: Attenuation = Attenuation.UNKNOWN
    enhancement: Enhancement = Enhancement.UNKNOWN
    cyst: bool = False
    mass: bool = False
    tumor: bool = False
    # Set when raw_size was seen but could not be standardized to centimeters.
    size_unparseable: bool = False

    def value_of(self, feature: str):
        """Return the scored value of one of the eight features."""
        if feature not in FEATURE_NAMES:
            raise KeyError(feature)
        return getattr(self, feature)

    def scored_values(self) -> tuple:
        """The eight scored feature values (excludes audit fields)."""
        return tuple(getattr(self, name) for name in FEATURE_NAMES)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


def validate_feature_set(f: FeatureSet) -> list[Violation]:
    """Check all FeatureSet invariants; total, never raises.

    Returns an empty list iff the record is valid; otherwise one Violation
    per broken rule, each naming the offending field.
    """
    violations: list[Violation] = []
    for name, enum_cls in _ENUM_BY_FEATURE.items():
        value = getattr(f, name)
        if not isinstance(value, enum_cls):
            violations.append(Violation(name, f"must be a {enum_cls.__name__} value"))
    for name in BOOLEAN_FEATURES + ("size_unparseable",):
        if not isinstance(getattr(f, name), bool):
            violations.append(Violation(name, "must be a boolean (no unknown state)"))
    if f.size_cm is not None:
        if not isinstance(f.size_cm, (int, float)) or isinstance(f.size_cm, bool):
            violations.append(Violation("size_cm", "must be a real number"))
        elif not math.isfinite(f.size_cm) or f.size_cm <= 0:
            violations.append(Violation("size_cm", "must be strictly positive and finite"))
    if f.raw_size is not None:
        if not isinstance(f.raw_size, str) or not f.raw_size:
            violations.append(Violation("raw_size", "must be a non-empty string when present"))
        elif f.size_cm is None and not f.size_unparseable:
            violations.append(
                Violation("raw_size", "present without size_cm and not marked unparseable")
            )
    return violations


@dataclass(frozen=True)
class SliceRef:
    """Reference to one slice of one series, as reports state it."""

    series_number: int
    image_number: int  # 1-based position in SliceLocation-sorted order
    plane: Plane = Plane.UNKNOWN

    def __post_init__(self):
        if self.series_number < 1:
            raise DataError(f"series_number must be >= 1, got {self.series_number}")
        if self.image_number < 1:
            raise DataError(f"image_number must be >= 1, got {self.image_number}")

    @property
    def excluded_by_plane(self) -> bool:
        """True for refs the curation protocol excludes (known non-coronal)."""
        return self.plane in (Plane.AXIAL, Plane.SAGITTAL)


@dataclass(frozen=True)
class Annotation:
    """The (report sentence, feature labels, CT slice) processing unit."""

    annotation_id: str
    patient_id: str
    report_id: str
    sentence: str
    slice: SliceRef
    features: FeatureSet
    split_fold: int | None = None

    def __post_init__(self):
        if not self.sentence:
            raise DataError(f"annotation {self.annotation_id}: sentence must be non-empty")


@dataclass
class CohortManifest:
    annotations: list[Annotation] = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION
    provenance: str = "phantom"  # "real" | "phantom"

    def __len__(self) -> int:
        return len(self.annotations)

    def by_id(self) -> dict[str, Annotation]:
        return {a.annotation_id: a for a in self.annotations}


# ---------------------------------------------------------------------------
# JSONL serialization. One annotation object per line, preceded by a header
# line carrying schema_version and provenance (distinguished by the absence
# of "annotation_id"). Enum tokens are lowercase with underscores.
# ---------------------------------------------------------------------------


def feature_set_to_dict(f: FeatureSet) -> dict:
    d = {
        "position": f.position.value,
        "raw_size": f.raw_size,
        "size_cm": f.size_cm,
        "exophytic": f.exophytic.value,
        "attenuation": f.attenuation.value,
        "enhancement": f.enhancement.value,
        "cyst": f.cyst,
        "mass": f.mass,
        "tumor": f.tumor,
    }
    if f.size_unparseable:
        d["size_unparseable"] = True
    return d


def _parse_enum(enum_cls, token, field_name: str):
    try:
        return enum_cls(token)
    except ValueError:
        raise DataError(
            f"unknown {field_name} token {token!r}; expected one of "
            f"{[e.value for e in enum_cls]}"
        ) from None


def feature_set_from_dict(d: dict) -> FeatureSet:
    return FeatureSet(
        position=_parse_enum(Position, d.get("position", "unknown"), "position"),
        raw_size=d.get("raw_size"),
        size_cm=float(d["size_cm"]) if d.get("size_cm") is not None else None,
        exophytic=_parse_enum(GrowthPattern, d.get("exophytic", "unknown"), "exophytic"),
        attenuation=_parse_enum(Attenuation, d.get("attenuation", "unknown"), "attenuation"),
        enhancement=_parse_enum(Enhancement, d.get("enhancement", "unknown"), "enhancement"),
        cyst=bool(d.get("cyst", False)),
        mass=bool(d.get("mass", False)),
        tumor=bool(d.get("tumor", False)),
        size_unparseable=bool(d.get("size_unparseable", False)),
    )


def annotation_to_dict(a: Annotation) -> dict:
    d = {
        "annotation_id": a.annotation_id,
        "patient_id": a.patient_id,
        "report_id": a.report_id,
        "sentence": a.sentence,
        "slice": {
            "series_number": a.slice.series_number,
            "image_number": a.slice.image_number,
            "plane": a.slice.plane.value,
        },
        "features": feature_set_to_dict(a.features),
    }
    if a.split_fold is not None:
        d["split_fold"] = a.split_fold
    return d


def annotation_from_dict(d: dict) -> Annotation:
    for key in ("annotation_id", "patient_id", "report_id", "sentence", "slice", "features"):
        if key not in d:
            raise DataError(f"missing field {key!r}")
    s = d["slice"]
    ref = SliceRef(
        series_number=int(s["series_number"]),
        image_number=int(s["image_number"]),
        plane=_parse_enum(Plane, s.get("plane", "unknown"), "plane"),
    )
    return Annotation(
        annotation_id=str(d["annotation_id"]),
        patient_id=str(d["patient_id"]),
        report_id=str(d["report_id"]),
        sentence=d["sentence"],
        slice=ref,
        features=feature_set_from_dict(d["features"]),
        split_fold=int(d["split_fold"]) if d.get("split_fold") is not None else None,
    )


def save_manifest(manifest: CohortManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [
        json.dumps(
            {"schema_version": manifest.schema_version, "provenance": manifest.provenance},
            sort_keys=True,
        )
    ]
    lines += [json.dumps(annotation_to_dict(a), sort_keys=True) for a in manifest.annotations]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> CohortManifest:
    """Load a JSONL manifest; errors carry the 1-based line number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    manifest = CohortManifest(annotations=[])
    seen_ids: set[str] = set()
    header_seen = False
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        if "annotation_id" not in record:
            if header_seen or manifest.annotations:
                raise DataError(f"{path}:{lineno}: unexpected second header line")
            manifest.schema_version = str(record.get("schema_version", SCHEMA_VERSION))
            manifest.provenance = str(record.get("provenance", "real"))
            header_seen = True
            continue
        try:
            annotation = annotation_from_dict(record)
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if annotation.annotation_id in seen_ids:
            raise DataError(
                f"{path}:{lineno}: duplicate annotation_id {annotation.annotation_id!r}"
            )
        seen_ids.add(annotation.annotation_id)
        manifest.annotations.append(annotation)
    return manifest


def with_features(annotation: Annotation, features: FeatureSet) -> Annotation:
    return dataclasses.replace(annotation, features=features)
