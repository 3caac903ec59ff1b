"""Operating-point and ranking metrics over clone scores.

Scores follow the "larger is more clone-like" convention, s(x) equal to
the negated latent norm, so an operating point tau on norms turns into
the rule: predict clone iff s >= -tau (the boundary counts as a clone).

AUROC is the probability that a random positive outscores a random
negative, ties counting one half; it is computed from average ranks,
which is exactly the pairwise definition. AUPRC sweeps the union of
observed scores in descending order, prepends the (recall 0, precision
at the highest threshold) anchor point, and integrates precision over
recall with the trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LabeledScores:
    pos_scores: np.ndarray
    neg_scores: np.ndarray

    def __post_init__(self) -> None:
        self.pos_scores = np.asarray(self.pos_scores, dtype=np.float64)
        self.neg_scores = np.asarray(self.neg_scores, dtype=np.float64)
        if not (np.all(np.isfinite(self.pos_scores)) and np.all(np.isfinite(self.neg_scores))):
            raise ValueError("scores must be finite")


@dataclass
class TrialMetrics:
    precision: float
    recall: float
    f1: float
    auroc: float
    auprc: float
    tp: int
    fp: int
    fn: int
    tn: int
    calibration: list[tuple[float, float, float, float]] = field(default_factory=list)
    # operating-point context, populated by the harness when one exists
    mu: float | None = None
    m: float | None = None
    tau: float | None = None
    f1_best: float | None = None
    train_seconds: float = 0.0


def confusion_at(scores: LabeledScores, tau: float) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) for the rule: predict clone iff s >= -tau."""
    cut = -tau
    tp = int(np.sum(scores.pos_scores >= cut))
    fp = int(np.sum(scores.neg_scores >= cut))
    fn = scores.pos_scores.size - tp
    tn = scores.neg_scores.size - fp
    return tp, fp, fn, tn


def prf1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 = 2PR/(P+R); each is 0 when its denominator is 0."""
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their mean rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores: LabeledScores) -> float:
    p = scores.pos_scores.size
    n = scores.neg_scores.size
    if p == 0 or n == 0:
        raise ValueError("auroc needs at least one positive and one negative score")
    ranks = _average_ranks(np.concatenate([scores.pos_scores, scores.neg_scores]))
    u = ranks[:p].sum() - p * (p + 1) / 2.0
    return float(u / (p * n))


def auprc(scores: LabeledScores) -> float:
    p = scores.pos_scores.size
    n = scores.neg_scores.size
    if p == 0 or n == 0:
        raise ValueError("auprc needs at least one positive and one negative score")
    all_scores = np.concatenate([scores.pos_scores, scores.neg_scores])
    labels = np.concatenate([np.ones(p, dtype=np.int64), np.zeros(n, dtype=np.int64)])
    order = np.argsort(-all_scores, kind="mergesort")
    sorted_scores = all_scores[order]
    sorted_labels = labels[order]
    cum_tp = np.cumsum(sorted_labels)
    cum_pred = np.arange(1, all_scores.size + 1)
    # last index of each distinct threshold = every position where the
    # next score differs
    boundary = np.nonzero(np.diff(sorted_scores, append=-np.inf))[0]
    precision = cum_tp[boundary] / cum_pred[boundary]
    recall = cum_tp[boundary] / p
    recall = np.concatenate([[0.0], recall])
    precision = np.concatenate([[precision[0]], precision])
    return float(np.trapezoid(precision, recall))


def calibration_sweep(
    scores: LabeledScores, tau: float, deltas: np.ndarray | None = None
) -> list[tuple[float, float, float, float]]:
    """(delta, precision, recall, f1) at thresholds tau + delta."""
    if deltas is None:
        deltas = default_deltas()
    rows = []
    for delta in np.asarray(deltas, dtype=np.float64):
        tp, fp, fn, _ = confusion_at(scores, tau + delta)
        precision, recall, f1 = prf1(tp, fp, fn)
        rows.append((float(delta), precision, recall, f1))
    return rows


def default_deltas() -> np.ndarray:
    return np.linspace(-0.5, 0.5, 21)


def best_f1(scores: LabeledScores) -> float:
    """Max F1 over a sweep of all observed scores used as thresholds."""
    best = 0.0
    for cut in np.unique(np.concatenate([scores.pos_scores, scores.neg_scores])):
        tp = int(np.sum(scores.pos_scores >= cut))
        fp = int(np.sum(scores.neg_scores >= cut))
        fn = scores.pos_scores.size - tp
        best = max(best, prf1(tp, fp, fn)[2])
    return best


def evaluate_at(scores: LabeledScores, tau: float, deltas: np.ndarray | None = None) -> TrialMetrics:
    """Full operating-point + ranking metrics at threshold tau."""
    tp, fp, fn, tn = confusion_at(scores, tau)
    precision, recall, f1 = prf1(tp, fp, fn)
    return TrialMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        auroc=auroc(scores),
        auprc=auprc(scores),
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        calibration=calibration_sweep(scores, tau, deltas),
        tau=tau,
        f1_best=best_f1(scores),
    )
