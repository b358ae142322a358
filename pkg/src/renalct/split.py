"""Annotation-level stratified k-fold cross-validation with minority-class
guarantees.

The splitter is capacity-constrained iterative stratification: fold sizes
are fixed up front (n//k, remainder spread over the lowest fold indices),
then label values are placed rarest-first into the fold with the greatest
remaining demand for that value, ties broken by remaining fold capacity and
finally by seeded random draw. A repair pass then guarantees every label
value with two or more instances reaches every fold's training side via
minimal pairwise swaps; single-instance values are pinned to the training
side of all folds and a warning is recorded.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, DataError
from .schema import CohortManifest

DEFAULT_STRATIFY_ON = (
    "position", "exophytic", "attenuation", "enhancement", "cyst", "mass", "tumor",
)


@dataclass(frozen=True)
class SplitConfig:
    k: int = 5
    seed: int = 0
    stratify_on: tuple[str, ...] = DEFAULT_STRATIFY_ON
    minority_floor: int = 1  # required training-side presence per label value
    patient_level: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.minority_floor != 1:
            raise ConfigError("only minority_floor=1 is supported")


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    seed: int
    fold_of: dict[str, int]
    pinned_train: frozenset[str] = frozenset()
    warnings: tuple[str, ...] = ()
    swap_count: int = 0

    def fold_ids(self, fold: int) -> list[str]:
        return [a for a, f in self.fold_of.items() if f == fold]

    def train_val_ids(self, fold: int) -> tuple[set[str], set[str]]:
        """Materialize one CV round: pinned ids always train."""
        if not 0 <= fold < self.k:
            raise ConfigError(f"fold {fold} out of range for k={self.k}")
        train, val = set(), set()
        for annotation_id, f in self.fold_of.items():
            if f == fold and annotation_id not in self.pinned_train:
                val.add(annotation_id)
            else:
                train.add(annotation_id)
        return train, val


def _label_token(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return getattr(value, "value", str(value))


def _label_key(feature: str, value) -> str:
    return f"{feature}={_label_token(value)}"


def _labels_of(annotation, stratify_on) -> list[str]:
    labels = []
    for feature in stratify_on:
        value = annotation.features.value_of(feature)
        if feature == "size_cm":
            value = "known" if value is not None else "unknown"
        labels.append(_label_key(feature, value))
    return labels


def stratified_kfold(manifest: CohortManifest, cfg: SplitConfig) -> FoldAssignment:
    """Partition annotations into k folds balancing per-label-value counts."""
    n = len(manifest)
    if cfg.k > n:
        raise ConfigError(f"k={cfg.k} exceeds the {n} available annotations")

    if cfg.patient_level:
        units = {}
        for a in manifest.annotations:
            units.setdefault(a.patient_id, []).append(a)
        unit_items = sorted(units.items())
    else:
        unit_items = [(a.annotation_id, [a]) for a in manifest.annotations]
        unit_items.sort()

    rng = random.Random(cfg.seed)
    capacity = [n // cfg.k + (1 if j < n % cfg.k else 0) for j in range(cfg.k)]

    unit_labels = {
        uid: [lab for a in members for lab in _labels_of(a, cfg.stratify_on)]
        for uid, members in unit_items
    }
    unit_size = {uid: len(members) for uid, members in unit_items}
    label_units: dict[str, set[str]] = {}
    for uid, labels in unit_labels.items():
        for lab in labels:
            label_units.setdefault(lab, set()).add(uid)
    desired = {
        lab: [len(units_) * capacity[j] / n for j in range(cfg.k)]
        for lab, units_ in label_units.items()
    }

    fold_of_unit: dict[str, int] = {}
    unassigned = {uid for uid, _ in unit_items}

    def place(uid: str, fold: int) -> None:
        fold_of_unit[uid] = fold
        unassigned.discard(uid)
        capacity[fold] -= unit_size[uid]
        for lab in unit_labels[uid]:
            label_units[lab].discard(uid)
            desired[lab][fold] -= 1

    while unassigned:
        remaining = {lab: units_ & unassigned for lab, units_ in label_units.items()}
        remaining = {lab: u for lab, u in remaining.items() if u}
        if not remaining:
            for uid in sorted(unassigned):
                open_folds = [j for j in range(cfg.k) if capacity[j] >= unit_size[uid]]
                if not open_folds:
                    open_folds = list(range(cfg.k))
                top = max(capacity[j] for j in open_folds)
                place(uid, rng.choice([j for j in open_folds if capacity[j] == top]))
            break
        # Rarest label value first; stable name tie-break.
        rare_label = min(remaining, key=lambda lab: (len(remaining[lab]), lab))
        for uid in sorted(remaining[rare_label]):
            open_folds = [j for j in range(cfg.k) if capacity[j] >= unit_size[uid]]
            if not open_folds:
                open_folds = [j for j in range(cfg.k) if capacity[j] > 0] or list(range(cfg.k))
            best_demand = max(desired[rare_label][j] for j in open_folds)
            candidates = [
                j for j in open_folds if desired[rare_label][j] == best_demand
            ]
            if len(candidates) > 1:
                # Tie-break on the unit's total remaining demand, so common
                # labels stay balanced while rare ones are being placed.
                def total_demand(j):
                    return sum(desired[lab][j] for lab in unit_labels[uid])

                top = max(total_demand(j) for j in candidates)
                candidates = [j for j in candidates if total_demand(j) == top]
            if len(candidates) > 1:
                top_cap = max(capacity[j] for j in candidates)
                candidates = [j for j in candidates if capacity[j] == top_cap]
            place(uid, candidates[0] if len(candidates) == 1 else rng.choice(candidates))

    fold_of = {}
    for uid, members in unit_items:
        for a in members:
            fold_of[a.annotation_id] = fold_of_unit[uid]
    if not cfg.patient_level:
        _rebalance_spread(fold_of, manifest, cfg)
    return FoldAssignment(k=cfg.k, seed=cfg.seed, fold_of=fold_of)


def _value_fold_counts(manifest, fold_of, stratify_on, k):
    counts: dict[str, list[int]] = {}
    for a in manifest.annotations:
        for lab in _labels_of(a, stratify_on):
            counts.setdefault(lab, [0] * k)[fold_of[a.annotation_id]] += 1
    return counts


def _rebalance_spread(fold_of, manifest, cfg, max_spread=2, max_passes=20):
    """Swap instances between folds until every label value's per-fold count
    spread is <= max_spread (where achievable without damaging another
    value). Deterministic; preserves fold sizes."""
    labels_by_id = {
        a.annotation_id: _labels_of(a, cfg.stratify_on) for a in manifest.annotations
    }

    def spread(counts):
        return max(counts) - min(counts)

    for _ in range(max_passes):
        changed = False
        counts = _value_fold_counts(manifest, fold_of, cfg.stratify_on, cfg.k)
        for lab in sorted(counts):
            lab_counts = counts[lab]
            if spread(lab_counts) <= max_spread:
                continue
            over = max(range(cfg.k), key=lambda j: (lab_counts[j], -j))
            under = min(range(cfg.k), key=lambda j: (lab_counts[j], j))
            movers = sorted(
                i for i, f in fold_of.items() if f == over and lab in labels_by_id[i]
            )
            partners = sorted(
                i for i, f in fold_of.items() if f == under and lab not in labels_by_id[i]
            )

            def swap_ok(mover, partner):
                for other in set(labels_by_id[mover]) ^ set(labels_by_id[partner]):
                    if other == lab:
                        continue
                    oc = list(counts[other])
                    before = spread(oc)
                    for instance, src, dst in ((mover, over, under), (partner, under, over)):
                        if other in labels_by_id[instance]:
                            oc[src] -= 1
                            oc[dst] += 1
                    if spread(oc) > max(max_spread, before):
                        return False
                return True

            done = False
            for mover in movers:
                for partner in partners:
                    if swap_ok(mover, partner):
                        fold_of[mover], fold_of[partner] = under, over
                        changed = True
                        done = True
                        break
                if done:
                    break
            if done:
                break  # counts are stale; rebuild on the next pass
        if not changed:
            return


def _concentrated_values(manifest, assignment, stratify_on):
    """Label values with >= 2 instances all sitting in a single fold."""
    by_value: dict[str, list[str]] = {}
    for a in manifest.annotations:
        for lab in _labels_of(a, stratify_on):
            by_value.setdefault(lab, []).append(a.annotation_id)
    problems = {}
    for lab, ids in by_value.items():
        if len(ids) < 2:
            continue
        folds = {assignment.fold_of[i] for i in ids}
        if len(folds) == 1:
            problems[lab] = sorted(ids)
    return by_value, problems


def enforce_minority_presence(
    assignment: FoldAssignment, manifest: CohortManifest, cfg: SplitConfig
) -> FoldAssignment:
    """Repair pass: spread every >= 2-count label value over >= 2 folds (so
    each fold's training side holds at least one) and pin 1-count values."""
    fold_of = dict(assignment.fold_of)
    warnings: list[str] = []
    swaps = 0
    labels_by_id = {
        a.annotation_id: set(_labels_of(a, cfg.stratify_on)) for a in manifest.annotations
    }

    by_value, problems = _concentrated_values(
        manifest, FoldAssignment(cfg.k, cfg.seed, fold_of), cfg.stratify_on
    )

    def concentrates(moved_id: str, target_fold: int) -> bool:
        # Would moving moved_id into target_fold concentrate any of its
        # label values entirely inside one fold?
        for lab in labels_by_id[moved_id]:
            ids = by_value[lab]
            if len(ids) < 2:
                continue
            folds = {target_fold if i == moved_id else fold_of[i] for i in ids}
            if len(folds) == 1:
                return True
        return False

    for lab in sorted(problems):
        ids = problems[lab]
        folds = {fold_of[i] for i in ids}
        if len(folds) > 1:
            continue  # an earlier swap already fixed this value
        source_fold = folds.pop()
        if cfg.patient_level:
            # Grouping is authoritative in patient-level mode: annotation
            # swaps could split a patient across folds, so only warn.
            warnings.append(
                f"{lab} concentrated in fold {source_fold}; not repaired in "
                "patient-level mode"
            )
            continue
        done = False
        for target_fold in sorted(range(cfg.k), key=lambda j: (j == source_fold, j)):
            if target_fold == source_fold:
                continue
            partners = sorted(i for i, f in fold_of.items() if f == target_fold)
            for mover in ids:
                if concentrates(mover, target_fold):
                    continue
                for partner in partners:
                    if lab in labels_by_id[partner]:
                        continue
                    if concentrates(partner, source_fold):
                        continue
                    fold_of[mover], fold_of[partner] = target_fold, source_fold
                    swaps += 1
                    done = True
                    break
                if done:
                    break
            if done:
                break
        if not done:
            warnings.append(f"could not spread {lab} beyond fold {source_fold}")

    pinned = set(assignment.pinned_train)
    for lab, ids in sorted(by_value.items()):
        if len(ids) == 1:
            pinned.add(ids[0])
            warnings.append(
                f"{lab} has a single instance; annotation {ids[0]} pinned to training"
            )

    return FoldAssignment(
        k=cfg.k,
        seed=cfg.seed,
        fold_of=fold_of,
        pinned_train=frozenset(pinned),
        warnings=tuple(warnings),
        swap_count=swaps,
    )


def split_manifest(manifest: CohortManifest, cfg: SplitConfig) -> FoldAssignment:
    return enforce_minority_presence(stratified_kfold(manifest, cfg), manifest, cfg)


def apply_fold_assignment(
    manifest: CohortManifest, assignment: FoldAssignment
) -> CohortManifest:
    """Copy of the manifest with each annotation's split_fold filled in."""
    import dataclasses

    annotations = []
    for a in manifest.annotations:
        if a.annotation_id not in assignment.fold_of:
            raise DataError(f"no fold assigned for {a.annotation_id}")
        annotations.append(
            dataclasses.replace(a, split_fold=assignment.fold_of[a.annotation_id])
        )
    return CohortManifest(
        annotations=annotations,
        schema_version=manifest.schema_version,
        provenance=manifest.provenance,
    )


def save_fold_assignment(assignment: FoldAssignment, path: str | Path) -> None:
    payload = {
        "seed": assignment.seed,
        "k": assignment.k,
        "assignments": [
            {"annotation_id": a, "fold": f}
            for a, f in sorted(assignment.fold_of.items())
        ],
        "pinned": sorted(assignment.pinned_train),
        "warnings": list(assignment.warnings),
        "swap_count": assignment.swap_count,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_fold_assignment(path: str | Path) -> FoldAssignment:
    path = Path(path)
    if not path.exists():
        raise DataError(f"fold file not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    return FoldAssignment(
        k=int(payload["k"]),
        seed=int(payload["seed"]),
        fold_of={r["annotation_id"]: int(r["fold"]) for r in payload["assignments"]},
        pinned_train=frozenset(payload.get("pinned", ())),
        warnings=tuple(payload.get("warnings", ())),
        swap_count=int(payload.get("swap_count", 0)),
    )
