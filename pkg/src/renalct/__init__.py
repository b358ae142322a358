"""Renal CT reporting pipeline: curation schema, DICOM ingest, slice
preprocessing, stratified splitting, prompt rendering, generation backends,
feature re-extraction, and the evaluation metric suite."""

__version__ = "0.1.0"

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
    load_manifest,
    save_manifest,
    validate_feature_set,
)

__all__ = [
    "__version__",
    "Annotation", "Attenuation", "CohortManifest", "Enhancement", "FeatureSet",
    "GrowthPattern", "Plane", "Position", "SliceRef",
    "load_manifest", "save_manifest", "validate_feature_set",
]
