"""The pluggable prediction-file boundary: external detectors write JSONL
predictions (optionally with per-class scores), and this module joins them
against a manifest into per-feature LabelColumns for evaluation.

Score-only rows (anomaly-style heads trained on negatives) carry scores but
no feature values; the evaluator thresholds them at max-F1 on training
folds. AUC is computable exactly when scores are present, which encodes the
extraction-vs-detector distinction at the type level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError
from .metrics.classification import LabelColumn
from .schema import (
    BOOLEAN_FEATURES,
    CATEGORICAL_FEATURES,
    CohortManifest,
    FeatureSet,
    feature_set_from_dict,
    feature_set_to_dict,
)

SCORED_FEATURES = CATEGORICAL_FEATURES + BOOLEAN_FEATURES


@dataclass
class PredictionFile:
    rows: list[dict]  # {annotation_id, features?, scores?, scores_are_ranks?}
    warnings: list[str] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [r["annotation_id"] for r in self.rows]


def _truth_token(features: FeatureSet, feature: str):
    value = features.value_of(feature)
    if feature in BOOLEAN_FEATURES:
        return "true" if value else "false"
    return value.value


def _validate_scores(row: dict) -> None:
    scores = row.get("scores") or {}
    ranks = bool(row.get("scores_are_ranks", False))
    for feature, per_class in scores.items():
        if not isinstance(per_class, dict):
            raise DataError(f"{row['annotation_id']}: scores for {feature} must map class to value")
        for cls, value in per_class.items():
            if not ranks and not 0.0 <= float(value) <= 1.0:
                raise DataError(
                    f"{row['annotation_id']}: score {value} for {feature}={cls} "
                    "outside [0, 1] (set scores_are_ranks for raw ranks)"
                )
        if not ranks:
            total = sum(float(v) for v in per_class.values())
            if len(per_class) > 1 and not 0.99 <= total <= 1.01:
                raise DataError(
                    f"{row['annotation_id']}: scores for {feature} sum to {total:.4f}, "
                    "expected ~1 (set scores_are_ranks for raw ranks)"
                )


def load_prediction_file(path: str | Path) -> PredictionFile:
    path = Path(path)
    if not path.exists():
        raise DataError(f"prediction file not found: {path}")
    rows = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        if "annotation_id" not in row:
            raise DataError(f"{path}:{lineno}: missing annotation_id")
        if row["annotation_id"] in seen:
            raise DataError(f"{path}:{lineno}: duplicate annotation_id {row['annotation_id']!r}")
        seen.add(row["annotation_id"])
        _validate_scores(row)
        rows.append(row)
    return PredictionFile(rows=rows)


def join_predictions(
    predictions: PredictionFile, manifest: CohortManifest
) -> tuple[dict[str, LabelColumn], dict[str, list], list[str], set[str]]:
    """Join on annotation_id.

    Returns (columns per categorical/boolean feature, size truth/pred pair
    lists, warnings, score_only_features). Ids in the file must be a subset
    of the manifest; manifest ids missing from the file are reported.
    """
    by_id = manifest.by_id()
    extra = [r["annotation_id"] for r in predictions.rows if r["annotation_id"] not in by_id]
    if extra:
        raise DataError(f"prediction ids not in manifest: {sorted(extra)[:5]}")
    present = {r["annotation_id"]: r for r in predictions.rows}
    missing = [a.annotation_id for a in manifest.annotations if a.annotation_id not in present]
    warnings = []
    if missing:
        covered = len(manifest) - len(missing)
        warnings.append(
            f"predictions missing for {len(missing)} annotations "
            f"(coverage {covered}/{len(manifest)}): "
            + ", ".join(missing[:10])
            + ("..." if len(missing) > 10 else "")
        )

    joined_ids = [a.annotation_id for a in manifest.annotations if a.annotation_id in present]
    features_by_id = {}
    for annotation_id in joined_ids:
        row = present[annotation_id]
        features_by_id[annotation_id] = (
            feature_set_from_dict(row["features"]) if row.get("features") else None
        )

    score_only: set[str] = set()
    columns: dict[str, LabelColumn] = {}
    for feature in SCORED_FEATURES:
        truth, predicted, scores = [], [], []
        any_scores = False
        any_values = False
        for annotation_id in joined_ids:
            annotation = by_id[annotation_id]
            row = present[annotation_id]
            truth.append(_truth_token(annotation.features, feature))
            predicted_features = features_by_id[annotation_id]
            if predicted_features is not None:
                predicted.append(_truth_token(predicted_features, feature))
                any_values = True
            else:
                predicted.append("unknown")
            per_class = (row.get("scores") or {}).get(feature)
            scores.append({k: float(v) for k, v in per_class.items()} if per_class else None)
            if per_class:
                any_scores = True
        columns[feature] = LabelColumn(
            feature=feature,
            truth=truth,
            predicted=predicted,
            scores=scores if any_scores else None,
            annotation_ids=list(joined_ids),
        )
        if any_scores and not any_values:
            score_only.add(feature)

    size_truth = [
        by_id[i].features.size_cm for i in joined_ids
    ]
    size_pred = [
        features_by_id[i].size_cm if features_by_id[i] is not None else None
        for i in joined_ids
    ]
    size = {"ids": joined_ids, "truth": size_truth, "predicted": size_pred}
    return columns, size, warnings, score_only


def constant_predictor(manifest: CohortManifest, feature: str, value) -> PredictionFile:
    """Majority/minority-class sanity baseline: every row predicts ``value``
    for ``feature`` (all other features stay unknown/false)."""
    if feature not in SCORED_FEATURES:
        raise DataError(f"unknown feature {feature!r}")
    rows = []
    for annotation in manifest.annotations:
        fields = {}
        if feature in BOOLEAN_FEATURES:
            fields[feature] = value if isinstance(value, bool) else str(value) == "true"
        else:
            fields[feature] = str(value)
        features = feature_set_from_dict(fields)
        rows.append(
            {
                "annotation_id": annotation.annotation_id,
                "features": feature_set_to_dict(features),
            }
        )
    return PredictionFile(rows=rows)


def random_predictor(manifest: CohortManifest, seed: int) -> PredictionFile:
    """Uniform-random predictions with uniform scores; evaluating this file
    should land near metrics.random_baseline for every feature."""
    import random as _random

    rng = _random.Random(seed)
    known_classes = {
        feature: sorted(
            {
                _truth_token(a.features, feature)
                for a in manifest.annotations
                if _truth_token(a.features, feature) != "unknown"
            }
        )
        for feature in SCORED_FEATURES
    }
    rows = []
    for annotation in manifest.annotations:
        fields: dict = {}
        scores: dict = {}
        for feature in SCORED_FEATURES:
            classes = known_classes[feature] or ["unknown"]
            choice = rng.choice(classes)
            if feature in BOOLEAN_FEATURES:
                fields[feature] = choice == "true"
            else:
                fields[feature] = choice
            if len(classes) == 2:
                u = rng.random()
                scores[feature] = {classes[0]: 1.0 - u, classes[1]: u}
        rows.append(
            {
                "annotation_id": annotation.annotation_id,
                "features": feature_set_to_dict(feature_set_from_dict(fields)),
                "scores": scores,
            }
        )
    return PredictionFile(rows=rows)


def save_prediction_file(predictions: PredictionFile, path: str | Path) -> None:
    lines = [json.dumps(row, sort_keys=True) for row in predictions.rows]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
