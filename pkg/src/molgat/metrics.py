"""Virtual-screening and pose-ranking metrics.

Ranking metrics treat higher scores as more likely active. Ties get
Mann-Whitney half credit everywhere: AUROC uses average ranks, and the
ROC/PR curves advance through tied-score blocks as a unit, so every reported
operating point is realizable by an actual score threshold.

Per-target report values are unweighted means over proteins (each protein
counts once regardless of how many compounds were screened against it).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

RE_LEVELS = (0.005, 0.01, 0.02, 0.05)
LOGAUC_LAMBDA = 0.001


@dataclass
class ScoredItem:
    score: float
    label: int
    protein_id: str
    complex_id: str
    rmsd: float | None = None


def _split_arrays(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be matched 1-D sequences")
    if not np.isfinite(scores).all():
        raise DataError("scores must be finite")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    cum = np.cumsum(counts)
    return cum[inverse] - (counts[inverse] - 1) / 2.0


def auroc(scores, labels) -> float:
    """Probability a random positive outranks a random negative (ties half)."""
    scores, labels = _split_arrays(scores, labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels):
    """Vertices of the empirical ROC: (fpr, tpr) arrays starting at (0, 0).

    Tied scores advance as one block, so every vertex corresponds to a
    realizable threshold.
    """
    scores, labels = _split_arrays(scores, labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc needs at least one positive and one negative")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels == 1)
    fp = np.cumsum(sorted_labels == 0)
    block_ends = np.nonzero(np.append(np.diff(sorted_scores) != 0, True))[0]
    fpr = np.concatenate([[0.0], fp[block_ends] / n_neg])
    tpr = np.concatenate([[0.0], tp[block_ends] / n_pos])
    return fpr, tpr


def adjusted_logauc(scores, labels, lam: float = LOGAUC_LAMBDA) -> float:
    """Early-enrichment AUC on a log10 FPR axis, minus the random-classifier area.

    The empirical ROC is integrated by trapezoid from lam to 1 with FPR
    clamped below at lam, normalized by log10(1/lam). A random classifier
    scores 0; a perfect one scores 1 minus the random area (~0.85538 at
    lam=0.001); all-positives-last scores minus the random area.
    """
    if not 0.0 < lam < 1.0:
        raise DataError(f"lambda must be in (0,1), got {lam}")
    fpr, tpr = roc_points(scores, labels)
    log_fpr = np.log10(np.maximum(fpr, lam))
    widths = np.diff(log_fpr)
    heights = (tpr[1:] + tpr[:-1]) / 2.0
    span = math.log10(1.0 / lam)
    logauc = float((widths * heights).sum() / span)
    random_area = (1.0 - lam) / (math.log(10.0) * span)
    return logauc - random_area


def prauc(scores, labels) -> float:
    """Area under precision-recall in the average-precision (step) form."""
    scores, labels = _split_arrays(scores, labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise DataError("prauc needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels == 1)
    ranks = np.arange(1, len(sorted_labels) + 1)
    block_ends = np.nonzero(np.append(np.diff(sorted_scores) != 0, True))[0]
    recall = tp[block_ends] / n_pos
    precision = tp[block_ends] / ranks[block_ends]
    recall_prev = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - recall_prev) * precision).sum())


def re_score(scores, labels, fpr_level: float) -> float:
    """TPR over FPR at the smallest realizable FPR at or above the level."""
    if not 0.0 < fpr_level < 1.0:
        raise DataError(f"fpr level must be in (0,1), got {fpr_level}")
    scores, labels = _split_arrays(scores, labels)
    n_neg = int((labels == 0).sum())
    if n_neg < 1.0 / fpr_level:
        raise DataError(
            f"re@{fpr_level}: needs at least {math.ceil(1.0 / fpr_level)} negatives, have {n_neg}"
        )
    fpr, tpr = roc_points(scores, labels)
    eligible = fpr >= fpr_level
    achieved = fpr[eligible].min()
    best_tpr = tpr[fpr == achieved].max()
    return float(best_tpr / achieved)


def per_protein_average(values) -> float:
    """Unweighted mean over proteins; callers skip non-computable proteins."""
    values = [v for v in values]
    if not values:
        raise DataError("no per-protein values to average")
    return float(np.mean(values))


def topn_success(items: list[ScoredItem], n: int) -> float:
    """Fraction of complexes with a pose under 2 A RMSD among the n top-scored."""
    if n < 1:
        raise DataError(f"n must be positive, got {n}")
    by_complex: dict[str, list[ScoredItem]] = {}
    for item in items:
        if item.rmsd is None:
            raise DataError(f"pose {item.complex_id} is missing an rmsd annotation")
        by_complex.setdefault(item.complex_id, []).append(item)
    if not by_complex:
        raise DataError("no poses given")
    hits = 0
    for poses in by_complex.values():
        ranked = sorted(poses, key=lambda p: -p.score)
        if any(p.rmsd < 2.0 for p in ranked[:n]):
            hits += 1
    return hits / len(by_complex)


# ---------------------------------------------------------------------------
# Per-protein evaluation report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    per_protein: list[dict]
    aggregate: dict
    skipped_proteins: list[str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "aggregate": self.aggregate,
                "per_protein": self.per_protein,
                "skipped_proteins": self.skipped_proteins,
            },
            indent=2,
            sort_keys=True,
        )

    def write_csv(self, path) -> None:
        columns = ["protein_id", "n_samples", "n_positive", "n_negative"]
        metric_cols = [k for k in self.aggregate if k not in ("n_proteins", "n_skipped")]
        columns += sorted(metric_cols)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            writer.writeheader()
            for row in self.per_protein:
                writer.writerow({k: _csv_cell(row.get(k)) for k in columns})
            agg = dict(self.aggregate)
            agg["protein_id"] = "AGGREGATE"
            writer.writerow({k: _csv_cell(agg.get(k)) for k in columns})


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def evaluate_scored(items: list[ScoredItem], re_levels=RE_LEVELS) -> EvalReport:
    """Compute screening metrics per protein and their unweighted means.

    Proteins whose score set contains a single class are skipped for the
    threshold metrics and listed in the report. RE levels that are not
    realizable for a protein (too few negatives) are left blank for that
    protein and excluded from that level's aggregate.
    """
    by_protein: dict[str, list[ScoredItem]] = {}
    for item in items:
        by_protein.setdefault(item.protein_id, []).append(item)

    per_protein = []
    skipped = []
    for protein_id in sorted(by_protein):
        group = by_protein[protein_id]
        scores = [g.score for g in group]
        labels = [g.label for g in group]
        n_pos = sum(1 for l in labels if l == 1)
        n_neg = len(labels) - n_pos
        row = {
            "protein_id": protein_id,
            "n_samples": len(group),
            "n_positive": n_pos,
            "n_negative": n_neg,
        }
        if n_pos == 0 or n_neg == 0:
            skipped.append(protein_id)
            continue
        row["auroc"] = auroc(scores, labels)
        row["adjusted_logauc"] = adjusted_logauc(scores, labels)
        row["prauc"] = prauc(scores, labels)
        for level in re_levels:
            key = f"re_{level * 100:g}pct"
            try:
                row[key] = re_score(scores, labels, level)
            except DataError:
                row[key] = None
        per_protein.append(row)

    if not per_protein:
        raise DataError("no protein had both classes; nothing to evaluate")

    metric_keys = ["auroc", "adjusted_logauc", "prauc"] + [
        f"re_{level * 100:g}pct" for level in re_levels
    ]
    aggregate = {"n_proteins": len(per_protein), "n_skipped": len(skipped)}
    for key in metric_keys:
        values = [row[key] for row in per_protein if row.get(key) is not None]
        aggregate[key] = per_protein_average(values) if values else None
    return EvalReport(per_protein=per_protein, aggregate=aggregate, skipped_proteins=skipped)


def write_curve_csv(path, scores, labels, kind: str) -> None:
    """Dump pooled ROC ('roc') or PR ('pr') curve vertices for plotting."""
    if kind == "roc":
        fpr, tpr = roc_points(scores, labels)
        header, columns = ("fpr", "tpr"), (fpr, tpr)
    elif kind == "pr":
        scores_arr, labels_arr = _split_arrays(scores, labels)
        order = np.argsort(-scores_arr, kind="mergesort")
        sorted_labels = labels_arr[order]
        sorted_scores = scores_arr[order]
        tp = np.cumsum(sorted_labels == 1)
        ranks = np.arange(1, len(sorted_labels) + 1)
        block_ends = np.nonzero(np.append(np.diff(sorted_scores) != 0, True))[0]
        n_pos = int((labels_arr == 1).sum())
        if n_pos == 0:
            raise DataError("pr curve needs at least one positive")
        header = ("recall", "precision")
        columns = (tp[block_ends] / n_pos, tp[block_ends] / ranks[block_ends])
    else:
        raise ValueError(f"unknown curve kind {kind!r}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(c)) for c in row])
