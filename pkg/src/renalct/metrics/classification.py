"""Per-feature classification metrics, size regression error, rank AUC, and
the random baseline.

Conventions (fixed here, asserted by tests):
  * Instances whose ground truth is unknown are excluded before scoring.
  * A predicted "unknown" against known truth is wrong for accuracy and
    contributes a false negative to the instance's true class; it is not a
    class of its own, so it creates no false positives.
  * Macro averaging runs over the classes present in the (known) truth;
    a class never predicted gets precision 0 there.
  * Zero scorable instances yield None ("not computable"), never a silent 0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..errors import DataError

UNKNOWN_TOKEN = "unknown"


@dataclass
class LabelColumn:
    """Aligned truth/prediction vectors for one feature.

    Values are plain tokens (strings for categorical features, "true"/"false"
    for booleans, floats-or-None for size). ``scores`` holds one per-class
    probability dict per instance when a score-bearing predictor supplied
    them; extraction-derived predictions have none, which is what makes AUC
    inapplicable for them.
    """

    feature: str
    truth: list
    predicted: list
    scores: list[dict[str, float] | None] | None = None
    scores_are_ranks: bool = False
    annotation_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.truth) != len(self.predicted):
            raise DataError(
                f"{self.feature}: truth/prediction length mismatch "
                f"({len(self.truth)} vs {len(self.predicted)})"
            )
        if self.scores is not None and len(self.scores) != len(self.truth):
            raise DataError(f"{self.feature}: scores length mismatch")

    def known_pairs(self) -> list[tuple]:
        return [
            (t, p)
            for t, p in zip(self.truth, self.predicted)
            if t is not None and t != UNKNOWN_TOKEN
        ]


def classification_metrics(col: LabelColumn) -> dict[str, float | None]:
    """Accuracy plus macro precision/recall/F1 over known-truth instances."""
    pairs = col.known_pairs()
    if not pairs:
        return {"accuracy": None, "precision": None, "recall": None, "f1": None}

    correct = sum(1 for t, p in pairs if p == t)
    accuracy = correct / len(pairs)

    classes = sorted({t for t, _ in pairs}, key=str)
    precisions, recalls, f1s = [], [], []
    for cls in classes:
        tp = sum(1 for t, p in pairs if t == cls and p == cls)
        fp = sum(1 for t, p in pairs if t != cls and p == cls)
        fn = sum(1 for t, p in pairs if t == cls and p != cls)
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn)  # tp + fn >= 1 for classes present in truth
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)

    n = len(classes)
    return {
        "accuracy": accuracy,
        "precision": sum(precisions) / n,
        "recall": sum(recalls) / n,
        "f1": sum(f1s) / n,
    }


def auc(scores: list[float], labels: list[bool]) -> float | None:
    """Rank AUC: P(score_pos > score_neg) with ties counting half.

    Returns None when only one class is present (not computable).
    """
    if len(scores) != len(labels):
        raise DataError("auc: scores/labels length mismatch")
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    if not pos or not neg:
        return None
    # Rank-sum formulation: U = R_pos - P(P+1)/2, AUC = U / (P*N).
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    ranks = [0.0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1  # 1-based, ties share the mean rank
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    rank_sum = sum(r for r, y in zip(ranks, labels) if y)
    p, n = len(pos), len(neg)
    return (rank_sum - p * (p + 1) / 2) / (p * n)


def size_mse(
    truth: list[float | None], predicted: list[float | None]
) -> dict[str, float | None]:
    """MSE over pairs where both sides are known, plus prediction coverage."""
    if len(truth) != len(predicted):
        raise DataError("size_mse: length mismatch")
    known_truth = [(t, p) for t, p in zip(truth, predicted) if t is not None]
    scored = [(t, p) for t, p in known_truth if p is not None]
    if not scored:
        return {"mse": None, "coverage": 0.0 if known_truth else None}
    mse = sum((t - p) ** 2 for t, p in scored) / len(scored)
    return {"mse": mse, "coverage": len(scored) / len(known_truth)}


def random_baseline(
    truth: list, trials: int, seed: int
) -> dict[str, float | None]:
    """Mean metrics of a uniform-random predictor over ``trials`` draws.

    Each trial predicts uniformly over the classes present in the known
    truth and draws a positive-class score uniform on [0, 1]; AUC is
    reported for binary columns only.
    """
    if trials < 1:
        raise DataError("random_baseline: trials must be >= 1")
    known = [t for t in truth if t is not None and t != UNKNOWN_TOKEN]
    if not known:
        return {
            "accuracy": None, "precision": None, "recall": None,
            "f1": None, "auc": None,
        }
    classes = sorted(set(known), key=str)
    rng = random.Random(seed)
    sums = {"accuracy": 0.0, "precision": 0.0, "recall": 0.0, "f1": 0.0}
    auc_sum, auc_trials = 0.0, 0
    binary = len(classes) == 2
    for _ in range(trials):
        predicted = [rng.choice(classes) for _ in known]
        m = classification_metrics(LabelColumn("random", known, predicted))
        for key in sums:
            sums[key] += m[key]
        if binary:
            pos_cls = classes[1]
            scores = [rng.random() for _ in known]
            a = auc(scores, [t == pos_cls for t in known])
            if a is not None:
                auc_sum += a
                auc_trials += 1
    out: dict[str, float | None] = {k: v / trials for k, v in sums.items()}
    out["auc"] = auc_sum / auc_trials if auc_trials else None
    return out


def max_f1_threshold(scores: list[float], labels: list[bool]) -> float:
    """Threshold t maximizing F1 of ``score >= t`` on the given data.

    Supports the score-only (anomaly-style) prediction files: the evaluator
    picks the threshold on training folds and applies it to validation.
    """
    if not scores:
        raise DataError("max_f1_threshold: empty input")
    candidates = sorted(set(scores))
    best_t, best_f1 = candidates[0], -1.0
    for t in candidates:
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and not y)
        fn = sum(1 for s, y in zip(scores, labels) if s < t and y)
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom else 0.0
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    return best_t
