"""Pooled ROC/PR area computation, subject-level leave-one-out fold planning,
and an AUC variance bound for reporting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, MetricError, PlanError, ValidationError


@dataclass(frozen=True)
class PredictionSet:
    """Per-window scores and labels, keyed by (subject_id, window_index)."""

    subject_ids: tuple
    window_indices: np.ndarray
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.window_indices, dtype=np.int64)
        s = np.asarray(self.scores, dtype=np.float64)
        l = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "window_indices", w)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", l)
        n = len(self.subject_ids)
        if not (w.shape == s.shape == l.shape == (n,)):
            raise ValidationError("prediction arrays must be 1-D with equal length")
        if not np.all(np.isfinite(s)):
            raise ValidationError("scores must be finite")
        if not np.all(np.isin(l, (0, 1))):
            raise ValidationError("labels must be 0 or 1")
        keys = set(zip(self.subject_ids, w.tolist()))
        if len(keys) != n:
            raise DataError("duplicate (subject_id, window_index) keys in prediction set")

    def __len__(self) -> int:
        return len(self.subject_ids)

    @classmethod
    def from_rows(cls, rows) -> "PredictionSet":
        rows = list(rows)
        return cls(
            subject_ids=tuple(r[0] for r in rows),
            window_indices=np.array([r[1] for r in rows], dtype=np.int64),
            scores=np.array([r[2] for r in rows], dtype=np.float64),
            labels=np.array([r[3] for r in rows], dtype=np.int64),
        )


def concat_predictions(parts: list[PredictionSet]) -> PredictionSet:
    parts = [p for p in parts if len(p)]
    if not parts:
        raise DataError("no predictions to pool")
    return PredictionSet(
        subject_ids=tuple(s for p in parts for s in p.subject_ids),
        window_indices=np.concatenate([p.window_indices for p in parts]),
        scores=np.concatenate([p.scores for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
    )


def roc_auc(ps: PredictionSet) -> float:
    """Probability that a random positive outscores a random negative, ties
    counted half; computed via midranks (exactly the trapezoidal ROC area)."""
    labels = ps.labels
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC AUC needs both classes present")
    ranks = _midranks(ps.scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _midranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pr_auc(ps: PredictionSet) -> float:
    """Area under the precision-recall curve by step-wise summation over
    descending unique score thresholds (no interpolation between points);
    tied scores enter as one group."""
    labels = ps.labels
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("PR AUC needs at least one positive")
    order = np.argsort(-ps.scores, kind="mergesort")
    scores = ps.scores[order]
    pos = labels[order] == 1

    area = 0.0
    tp = 0
    total = 0
    prev_recall = 0.0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j + 1 < n and scores[j + 1] == scores[i]:
            j += 1
        tp += int(pos[i : j + 1].sum())
        total += j - i + 1
        recall = tp / n_pos
        precision = tp / total
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(area)


def auc_variance_bound(auc: float, n_pos: int, n_neg: int) -> float:
    """Reported bound on Var(AUC): the larger of the Hanley-McNeil estimate
    and the distribution-free bound A(1-A)/min(n+, n-)."""
    if not (0.0 <= auc <= 1.0):
        raise ValidationError(f"auc must lie in [0, 1], got {auc}")
    if n_pos < 1 or n_neg < 1:
        raise ValidationError("both class counts must be >= 1")
    a = float(auc)
    q1 = a / (2.0 - a)
    q2 = 2.0 * a * a / (1.0 + a)
    hanley = (
        a * (1.0 - a) + (n_pos - 1) * (q1 - a * a) + (n_neg - 1) * (q2 - a * a)
    ) / (n_pos * n_neg)
    dist_free = a * (1.0 - a) / min(n_pos, n_neg)
    return float(max(hanley, dist_free))


@dataclass(frozen=True)
class FoldPlan:
    """Per-fold (validation subjects, training subjects); validation sets
    partition the subject pool."""

    folds: tuple

    def __len__(self) -> int:
        return len(self.folds)


def loso_folds(subject_ids) -> FoldPlan:
    ids = sorted(set(subject_ids))
    if len(ids) < 2:
        raise PlanError(f"leave-one-subject-out needs >= 2 subjects, got {len(ids)}")
    folds = tuple(
        ((sid,), tuple(s for s in ids if s != sid))
        for sid in ids
    )
    return FoldPlan(folds)


@dataclass
class ReportRow:
    variant: str
    roc_auc: float
    pr_auc: float
    n_pos: int
    n_neg: int
    variance_bound: float
    seed: int
    config_digest: str

    def __post_init__(self):
        if not (0.0 <= self.roc_auc <= 1.0 and 0.0 <= self.pr_auc <= 1.0):
            raise ValidationError(f"{self.variant}: metrics must lie in [0, 1]")
        if self.n_pos < 0 or self.n_neg < 0:
            raise ValidationError(f"{self.variant}: class counts must be >= 0")


@dataclass
class MetricsReport:
    rows: list[ReportRow] = field(default_factory=list)

    def row_for(self, variant: str) -> ReportRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)


def pooled_evaluate(
    fold_predictions: list[PredictionSet],
    variant: str = "",
    seed: int = 0,
    config_digest: str = "",
) -> ReportRow:
    """Concatenate all folds' predictions and compute the metrics once on the
    pooled set."""
    pooled = concat_predictions(fold_predictions)
    n_pos = int(pooled.labels.sum())
    n_neg = len(pooled) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("pooled predictions must contain both classes")
    a = roc_auc(pooled)
    return ReportRow(
        variant=variant,
        roc_auc=a,
        pr_auc=pr_auc(pooled),
        n_pos=n_pos,
        n_neg=n_neg,
        variance_bound=auc_variance_bound(a, n_pos, n_neg),
        seed=seed,
        config_digest=config_digest,
    )
