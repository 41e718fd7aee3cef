"""Multi-label evaluation: per-category AP/mAP and the OP/OR/OF1, CP/CR/CF1 suite.

AP follows the uninterpolated ranking definition: precision at each
positive's rank, averaged over positives, with ties broken by stable
original order.  The overall metrics pool true/predicted/actual positive
counts over categories; the per-class metrics average per-category
precision and recall.  Categories without positives in the evaluation
labels are excluded from mAP and the per-class means, and recorded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricReport:
    per_category_ap: np.ndarray
    map: float
    overall_precision: float
    overall_recall: float
    overall_f1: float
    per_class_precision: float
    per_class_recall: float
    per_class_f1: float
    threshold: float
    known_proportion: float
    n_correct: np.ndarray
    n_predicted: np.ndarray
    n_ground_truth: np.ndarray
    excluded_categories: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def row(self) -> dict:
        """The column set of the summary tables."""
        return {
            "proportion": self.known_proportion,
            "mAP": self.map,
            "OP": self.overall_precision,
            "OR": self.overall_recall,
            "OF1": self.overall_f1,
            "CP": self.per_class_precision,
            "CR": self.per_class_recall,
            "CF1": self.per_class_f1,
        }


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """AP of one category; labels in {+1, -1}, at least one positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(-scores, kind="stable")
    positive = labels[order] == 1
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive label")
    cum = np.cumsum(positive)
    precision = cum / np.arange(1, len(scores) + 1)
    return float(precision[positive].sum() / n_pos)


def classification_counts(scores: np.ndarray, labels: np.ndarray,
                          threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-category (correct, predicted, ground-truth) positive counts."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    predicted = scores > threshold
    actual = labels == 1
    n_correct = (predicted & actual).sum(axis=0)
    n_predicted = predicted.sum(axis=0)
    n_ground_truth = actual.sum(axis=0)
    return n_correct, n_predicted, n_ground_truth


def _safe_div(num: float, den: float, flags: list, what: str) -> float:
    if den == 0:
        flags.append(f"{what}: zero denominator, reported as 0")
        return 0.0
    return num / den


def aggregate(n_correct, n_predicted, n_ground_truth, per_category_ap,
              threshold: float = 0.5, known_proportion: float = 1.0,
              excluded=()) -> MetricReport:
    """Combine counts and per-category APs into one report."""
    flags: list = []
    excluded = list(excluded)
    included = np.array([c for c in range(len(n_ground_truth)) if c not in excluded])

    op = _safe_div(float(n_correct.sum()), float(n_predicted.sum()), flags, "OP")
    orec = _safe_div(float(n_correct.sum()), float(n_ground_truth.sum()), flags, "OR")
    of1 = _safe_div(2.0 * op * orec, op + orec, flags, "OF1")

    per_prec = np.zeros(len(included))
    per_rec = np.zeros(len(included))
    for i, cat in enumerate(included):
        per_prec[i] = _safe_div(float(n_correct[cat]), float(n_predicted[cat]), flags, f"CP[{cat}]")
        per_rec[i] = _safe_div(float(n_correct[cat]), float(n_ground_truth[cat]), flags, f"CR[{cat}]")
    cp = float(per_prec.mean()) if len(included) else 0.0
    cr = float(per_rec.mean()) if len(included) else 0.0
    cf1 = _safe_div(2.0 * cp * cr, cp + cr, flags, "CF1")

    ap = np.asarray(per_category_ap, dtype=np.float64)
    map_value = float(ap[included].mean()) if len(included) else 0.0

    return MetricReport(
        per_category_ap=ap, map=map_value,
        overall_precision=op, overall_recall=orec, overall_f1=of1,
        per_class_precision=cp, per_class_recall=cr, per_class_f1=cf1,
        threshold=threshold, known_proportion=known_proportion,
        n_correct=np.asarray(n_correct), n_predicted=np.asarray(n_predicted),
        n_ground_truth=np.asarray(n_ground_truth),
        excluded_categories=excluded, flags=flags,
    )


def evaluate_scores(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5,
                    known_proportion: float = 1.0) -> MetricReport:
    """Full report for an (N, C) score matrix against {+1, -1} labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_categories = labels.shape[1]
    ap = np.zeros(n_categories)
    excluded = []
    for cat in range(n_categories):
        if not np.any(labels[:, cat] == 1):
            excluded.append(cat)
            continue
        ap[cat] = average_precision(scores[:, cat], labels[:, cat])
    counts = classification_counts(scores, labels, threshold)
    report = aggregate(*counts, ap, threshold=threshold,
                       known_proportion=known_proportion, excluded=excluded)
    if excluded:
        report.flags.append(f"categories without positives excluded from means: {excluded}")
    return report
