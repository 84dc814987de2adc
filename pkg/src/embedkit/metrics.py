"""Accuracy, Average Precision and mAP.

AP is the interpolation-free instance-retrieval variant: the mean of
precision-at-k over the ranks k that hold a relevant item, normalized by
the total number of relevant items. Classification mAP is the macro mean
of one-vs-rest AP over classes. Units with zero relevant items are
skipped and reported, never silently counted as zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import DatasetManifest
from .errors import AlignmentError


@dataclass
class EvalReport:
    mode: str
    map: float
    per_unit_ap: dict[str, float]
    skipped: list[str] = field(default_factory=list)
    accuracy: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"mode": self.mode}
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        out["map"] = self.map
        out["per_unit_ap"] = self.per_unit_ap
        out["skipped"] = self.skipped
        out["config"] = self.config
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def results_dict(self) -> dict:
        """Metrics only, no mode/config echo; for cross-mode comparison."""
        out = {}
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        out["map"] = self.map
        out["per_unit_ap"] = self.per_unit_ap
        out["skipped"] = self.skipped
        return out

    def csv_rows(self):
        yield "unit,ap"
        for unit, ap in self.per_unit_ap.items():
            yield f"{unit},{ap!r}"


def accuracy(predictions: dict[str, int], truth: dict[str, int]) -> float:
    """Fraction of exact matches over an identical key set."""
    if not truth:
        raise AlignmentError("empty truth set")
    if predictions.keys() != truth.keys():
        missing = sorted(truth.keys() - predictions.keys())[:5]
        extra = sorted(predictions.keys() - truth.keys())[:5]
        raise AlignmentError(
            f"prediction/truth key mismatch: missing {missing}, extra {extra}"
        )
    hits = sum(1 for k, v in truth.items() if predictions[k] == v)
    return hits / len(truth)


def average_precision(ranking: list[str], relevant: set[str]) -> float | None:
    """AP of one ranked list; None when the relevant set is empty (skip)."""
    if not relevant:
        return None
    hits = 0
    total = 0.0
    for k, item in enumerate(ranking, start=1):
        if item in relevant:
            hits += 1
            total += hits / k
    return total / len(relevant)


def retrieval_map(ranked_lists, manifest: DatasetManifest,
                  mode: str = "retrieval", config: dict | None = None) -> EvalReport:
    """Mean per-query AP; relevance = index items sharing the query's class."""
    per_query: dict[str, float] = {}
    skipped: list[str] = []
    for rl in ranked_lists:
        query_class = manifest.item(rl.query_id).class_id
        universe = [item_id for item_id, _ in rl.ranking]
        relevant = {
            i for i in universe if manifest.item(i).class_id == query_class
        }
        ap = average_precision(universe, relevant)
        if ap is None:
            skipped.append(rl.query_id)
        else:
            per_query[rl.query_id] = ap
    mean_ap = float(np.mean(list(per_query.values()))) if per_query else 0.0
    return EvalReport(
        mode=mode, map=mean_ap, per_unit_ap=per_query,
        skipped=skipped, config=config or {},
    )


def classification_map(probs: dict[str, np.ndarray], manifest: DatasetManifest,
                       mode: str = "classification",
                       config: dict | None = None,
                       accuracy_value: float | None = None) -> EvalReport:
    """Macro one-vs-rest AP over classes with >= 1 evaluated instance.

    Items are ranked per class by their score with a stable tie-break on
    the evaluation order (the order of ``probs`` keys).
    """
    item_ids = list(probs.keys())
    if not item_ids:
        raise AlignmentError("no predictions to evaluate")
    score_matrix = np.stack([np.asarray(probs[i], dtype=np.float64)
                             for i in item_ids])
    truth_classes = [manifest.item(i).class_id for i in item_ids]
    per_class: dict[str, float] = {}
    skipped: list[str] = []
    for c, class_id in enumerate(manifest.classes):
        relevant = {item_ids[i] for i, tc in enumerate(truth_classes)
                    if tc == class_id}
        if not relevant:
            skipped.append(class_id)
            continue
        order = np.argsort(-score_matrix[:, c], kind="stable")
        ranking = [item_ids[i] for i in order]
        per_class[class_id] = average_precision(ranking, relevant)
    mean_ap = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return EvalReport(
        mode=mode, map=mean_ap, per_unit_ap=per_class, skipped=skipped,
        accuracy=accuracy_value, config=config or {},
    )
