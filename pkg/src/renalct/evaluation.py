"""Fold-wise evaluation: assemble per-feature metric rows and the NLG block
into MetricTables, for extraction-derived features (no scores, AUC renders
"--") or external prediction files (AUC numeric where scores exist).

Metrics are computed on each fold's validation side, then averaged over
folds by the report stage.
"""

from __future__ import annotations

from .errors import NotComputableError
from .metrics.classification import (
    LabelColumn,
    auc,
    classification_metrics,
    max_f1_threshold,
    size_mse,
)
from .metrics.nlg import bleu, meteor_corpus, rouge_l_corpus
from .metrics.table import FeatureRow, MetricTable
from .schema import BOOLEAN_FEATURES, CATEGORICAL_FEATURES, CohortManifest, FeatureSet
from .split import FoldAssignment

CLASSIFICATION_FEATURES = CATEGORICAL_FEATURES + BOOLEAN_FEATURES
FEATURE_ORDER = ("position", "exophytic", "attenuation", "enhancement",
                 "cyst", "mass", "tumor", "size_cm")


def _token(features: FeatureSet, feature: str) -> str:
    value = features.value_of(feature)
    if feature in BOOLEAN_FEATURES:
        return "true" if value else "false"
    return value.value


def _binary_auc(col: LabelColumn) -> float | None:
    """Rank AUC for binary features with per-class scores; None otherwise."""
    if col.scores is None:
        return None
    known = [
        (t, s)
        for t, s in zip(col.truth, col.scores)
        if t != "unknown" and s is not None
    ]
    classes = sorted({t for t, _ in known})
    if len(classes) != 2:
        return None
    positive = classes[1]
    scores = [s.get(positive, 0.0) for _, s in known]
    labels = [t == positive for t, _ in known]
    return auc(scores, labels)


def _classification_row(feature: str, col: LabelColumn) -> FeatureRow:
    metrics = classification_metrics(col)
    n_scored = len(col.known_pairs())
    return FeatureRow(
        feature=feature,
        auc=_binary_auc(col),
        accuracy=metrics["accuracy"],
        precision=metrics["precision"],
        recall=metrics["recall"],
        f1_or_mse=metrics["f1"],
        n_scored=n_scored,
    )


def _subset_column(col: LabelColumn, keep: list[int]) -> LabelColumn:
    return LabelColumn(
        feature=col.feature,
        truth=[col.truth[i] for i in keep],
        predicted=[col.predicted[i] for i in keep],
        scores=[col.scores[i] for i in keep] if col.scores is not None else None,
        annotation_ids=[col.annotation_ids[i] for i in keep] if col.annotation_ids else [],
    )


def _nlg_block(
    pairs: list[tuple[str, str]], bleu_smooth: bool = False
) -> dict[str, float | None] | None:
    if not pairs:
        return None
    candidates = [c for c, _ in pairs]
    references = [r for _, r in pairs]
    return {
        "bleu1": bleu(candidates, references, 1, smooth=bleu_smooth),
        "bleu4": bleu(candidates, references, 4, smooth=bleu_smooth),
        "rouge_l": rouge_l_corpus(candidates, references),
        "meteor": meteor_corpus(candidates, references),
    }


def evaluate_extractions(
    manifest: CohortManifest,
    assignment: FoldAssignment,
    extracted: dict[str, FeatureSet],
    generated_texts: dict[str, str] | None = None,
    bleu_smooth: bool = False,
) -> list[MetricTable]:
    """One MetricTable per fold over extraction-derived features.

    Extraction carries no confidence scores, so AUC is never computable
    here and renders "--".
    """
    tables = []
    for fold in range(assignment.k):
        _, val_ids = assignment.train_val_ids(fold)
        annotations = [a for a in manifest.annotations if a.annotation_id in val_ids]
        rows = []
        for feature in CLASSIFICATION_FEATURES:
            truth, predicted = [], []
            for a in annotations:
                truth.append(_token(a.features, feature))
                predicted_features = extracted.get(a.annotation_id)
                predicted.append(
                    _token(predicted_features, feature)
                    if predicted_features is not None
                    else "unknown"
                )
            rows.append(
                _classification_row(feature, LabelColumn(feature, truth, predicted))
            )
        size_truth = [a.features.size_cm for a in annotations]
        size_pred = [
            extracted[a.annotation_id].size_cm if a.annotation_id in extracted else None
            for a in annotations
        ]
        size = size_mse(size_truth, size_pred)
        rows.append(
            FeatureRow(
                feature="size_cm",
                f1_or_mse=size["mse"],
                coverage=size["coverage"],
                n_scored=sum(1 for t in size_truth if t is not None),
            )
        )
        nlg = None
        if generated_texts is not None:
            pairs = [
                (generated_texts[a.annotation_id], a.sentence)
                for a in annotations
                if a.annotation_id in generated_texts
            ]
            nlg = _nlg_block(pairs, bleu_smooth=bleu_smooth)
        tables.append(MetricTable(fold=fold, rows=rows, nlg=nlg))
    return tables


def evaluate_prediction_columns(
    manifest: CohortManifest,
    assignment: FoldAssignment,
    columns: dict[str, LabelColumn],
    size: dict,
    score_only: set[str],
) -> list[MetricTable]:
    """One MetricTable per fold over an external prediction file.

    Score-only features (anomaly heads) get their threshold picked at
    max-F1 on each fold's training side, then applied to validation.
    """
    tables = []
    for fold in range(assignment.k):
        train_ids, val_ids = assignment.train_val_ids(fold)
        rows = []
        for feature in CLASSIFICATION_FEATURES:
            col = columns[feature]
            ids = col.annotation_ids
            val_keep = [i for i, a in enumerate(ids) if a in val_ids]
            val_col = _subset_column(col, val_keep)

            if feature in score_only and col.scores is not None:
                train_keep = [
                    i
                    for i, a in enumerate(ids)
                    if a in train_ids and col.truth[i] != "unknown" and col.scores[i]
                ]
                classes = sorted(
                    {col.truth[i] for i in train_keep}
                    | {t for t in val_col.truth if t != "unknown"}
                )
                if len(classes) == 2 and train_keep:
                    positive = classes[1]
                    threshold = max_f1_threshold(
                        [col.scores[i].get(positive, 0.0) for i in train_keep],
                        [col.truth[i] == positive for i in train_keep],
                    )
                    val_col = LabelColumn(
                        feature=feature,
                        truth=val_col.truth,
                        predicted=[
                            (
                                positive
                                if s is not None and s.get(positive, 0.0) >= threshold
                                else classes[0]
                            )
                            for s in (val_col.scores or [None] * len(val_col.truth))
                        ],
                        scores=val_col.scores,
                        annotation_ids=val_col.annotation_ids,
                    )
            rows.append(_classification_row(feature, val_col))

        keep = [i for i, a in enumerate(size["ids"]) if a in val_ids]
        fold_size = size_mse(
            [size["truth"][i] for i in keep], [size["predicted"][i] for i in keep]
        )
        rows.append(
            FeatureRow(
                feature="size_cm",
                f1_or_mse=fold_size["mse"],
                coverage=fold_size["coverage"],
                n_scored=sum(1 for i in keep if size["truth"][i] is not None),
            )
        )
        tables.append(MetricTable(fold=fold, rows=rows, nlg=None))
    return tables


def check_strict(tables: list[MetricTable]) -> None:
    """Raise when any requested metric cell is not computable (exit code 5)."""
    for table in tables:
        for row in table.rows:
            cells = (
                (row.accuracy, "accuracy"), (row.precision, "precision"),
                (row.recall, "recall"), (row.f1_or_mse, "f1_or_mse"),
            ) if row.feature != "size_cm" else ((row.f1_or_mse, "mse"),)
            for value, name in cells:
                if value is None:
                    raise NotComputableError(
                        f"fold {table.fold}: {row.feature} {name} not computable"
                    )
