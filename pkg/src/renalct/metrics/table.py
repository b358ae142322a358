"""Result tables: per-feature metric rows plus the NLG block, with CSV and
fixed-width text rendering. Cells that are not computable hold None and
render as "--"."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

NOT_COMPUTABLE = "--"

FEATURE_CSV_HEADER = [
    "fold", "feature", "auc", "accuracy", "precision",
    "recall", "f1_or_mse", "coverage", "n_scored",
]
NLG_CSV_HEADER = ["fold", "bleu1", "bleu4", "rouge_l", "meteor"]


@dataclass
class FeatureRow:
    feature: str
    auc: float | None = None
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1_or_mse: float | None = None
    coverage: float | None = None
    n_scored: int | None = None


@dataclass
class MetricTable:
    fold: int | str
    rows: list[FeatureRow] = field(default_factory=list)
    nlg: dict[str, float | None] | None = None


def _cell(value: float | int | None) -> str:
    if value is None:
        return NOT_COMPUTABLE
    if isinstance(value, int):
        return str(value)
    return f"{value:.6f}"


def feature_csv(tables: list[MetricTable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FEATURE_CSV_HEADER)
    for table in tables:
        for row in table.rows:
            writer.writerow(
                [
                    table.fold, row.feature, _cell(row.auc), _cell(row.accuracy),
                    _cell(row.precision), _cell(row.recall), _cell(row.f1_or_mse),
                    _cell(row.coverage), _cell(row.n_scored),
                ]
            )
    return buf.getvalue()


def nlg_csv(tables: list[MetricTable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(NLG_CSV_HEADER)
    for table in tables:
        if table.nlg is None:
            continue
        writer.writerow(
            [table.fold]
            + [_cell(table.nlg.get(k)) for k in ("bleu1", "bleu4", "rouge_l", "meteor")]
        )
    return buf.getvalue()


def text_table(table: MetricTable) -> str:
    """Fixed-width rendering: feature rows with AUC/Accuracy/Precision/Recall/
    F1-or-MSE columns, then the NLG block when present."""
    header = ["Feature", "AUC", "Accuracy", "Precision", "Recall", "F1 / MSE"]
    lines = [f"Fold {table.fold}"]
    rows = [
        [
            row.feature, _cell(row.auc), _cell(row.accuracy),
            _cell(row.precision), _cell(row.recall), _cell(row.f1_or_mse),
        ]
        for row in table.rows
    ]
    widths = [
        max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines.append(fmt.format(*header))
    lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    lines += [fmt.format(*r) for r in rows]
    if table.nlg is not None:
        lines.append("")
        lines.append(
            "  ".join(
                f"{name}: {_cell(table.nlg.get(key))}"
                for name, key in (
                    ("BLEU-1", "bleu1"), ("BLEU-4", "bleu4"),
                    ("ROUGE-L", "rouge_l"), ("METEOR", "meteor"),
                )
            )
        )
    return "\n".join(lines) + "\n"


def mean_over_folds(tables: list[MetricTable]) -> MetricTable:
    """Mean each cell over the folds where it was computable."""

    def mean(values: list[float | None]) -> float | None:
        known = [v for v in values if v is not None]
        return sum(known) / len(known) if known else None

    features: list[str] = []
    for table in tables:
        for row in table.rows:
            if row.feature not in features:
                features.append(row.feature)

    rows = []
    for feature in features:
        cells = [r for t in tables for r in t.rows if r.feature == feature]
        rows.append(
            FeatureRow(
                feature=feature,
                auc=mean([c.auc for c in cells]),
                accuracy=mean([c.accuracy for c in cells]),
                precision=mean([c.precision for c in cells]),
                recall=mean([c.recall for c in cells]),
                f1_or_mse=mean([c.f1_or_mse for c in cells]),
                coverage=mean([c.coverage for c in cells]),
                n_scored=sum(c.n_scored or 0 for c in cells),
            )
        )
    nlg_tables = [t.nlg for t in tables if t.nlg is not None]
    nlg = None
    if nlg_tables:
        nlg = {
            key: mean([n.get(key) for n in nlg_tables])
            for key in ("bleu1", "bleu4", "rouge_l", "meteor")
        }
    return MetricTable(fold="mean", rows=rows, nlg=nlg)
