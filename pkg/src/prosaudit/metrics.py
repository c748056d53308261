"""Detection scoring: confusion metrics, equal error rate, AUROC.

The deepfake class is the positive class throughout; scores are oriented
so that higher means more deepfake-like.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import EmptyTrialsError, SingleClassError

POSITIVE_LABEL = "deepfake"


@dataclass(frozen=True)
class ScoredTrial:
    utterance_id: str
    score: float
    label: str  # bonafide | deepfake

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("trial score must be finite")


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    eer: float
    auroc: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_csv_row(self) -> str:
        header = "accuracy,precision,recall,f1,eer,auroc,threshold,tp,fp,tn,fn"
        row = ",".join([
            repr(self.accuracy), repr(self.precision), repr(self.recall),
            repr(self.f1), repr(self.eer), repr(self.auroc), repr(self.threshold),
            str(self.tp), str(self.fp), str(self.tn), str(self.fn),
        ])
        return header + "\n" + row + "\n"


def _split_scores(trials):
    scores = np.array([t.score for t in trials], dtype=np.float64)
    is_pos = np.array([t.label == POSITIVE_LABEL for t in trials], dtype=bool)
    return scores, is_pos


def confusion_metrics(trials, threshold: float = 0.5,
                      eer_value: float = float("nan"),
                      auroc_value: float = float("nan")) -> MetricsReport:
    """Threshold the scores (>= threshold predicts deepfake) and count.

    Empty precision/recall denominators yield 0 with the degeneracy flag
    set. EER/AUROC slots are filled from the optional arguments so one
    report object can carry the whole evaluation.
    """
    if not trials:
        raise EmptyTrialsError("no trials to score")
    scores, is_pos = _split_scores(trials)
    pred = scores >= threshold
    tp = int(np.sum(pred & is_pos))
    fp = int(np.sum(pred & ~is_pos))
    tn = int(np.sum(~pred & ~is_pos))
    fn = int(np.sum(~pred & is_pos))

    degenerate = (tp + fp == 0) or (tp + fn == 0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        accuracy=(tp + tn) / len(trials), precision=precision, recall=recall,
        f1=f1, eer=eer_value, auroc=auroc_value, threshold=threshold,
        tp=tp, fp=fp, tn=tn, fn=fn, degenerate=degenerate,
    )


def _roc_points(scores, is_pos):
    """Operating points (FPR, FNR) for thresholds at each distinct score.

    Predicting positive when score >= threshold; thresholds descend from
    above-max (nothing predicted positive) through every distinct score.
    """
    n_pos = int(np.sum(is_pos))
    n_neg = len(is_pos) - n_pos
    order = np.argsort(-scores, kind="stable")
    sorted_pos = is_pos[order]
    sorted_scores = scores[order]

    tp_cum = np.cumsum(sorted_pos)
    fp_cum = np.cumsum(~sorted_pos)
    # keep only the last row of each tied-score block
    keep = np.append(sorted_scores[1:] != sorted_scores[:-1], True)
    tps = np.concatenate([[0], tp_cum[keep]])
    fps = np.concatenate([[0], fp_cum[keep]])
    fpr = fps / n_neg
    fnr = (n_pos - tps) / n_pos
    return fpr, fnr


def eer(trials) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Sweeps every distinct score as a threshold, finds where FNR - FPR
    changes sign, and linearly interpolates between the bracketing
    operating points; with several crossings the lowest consistent value
    wins.
    """
    if not trials:
        raise EmptyTrialsError("no trials to score")
    scores, is_pos = _split_scores(trials)
    if is_pos.all() or not is_pos.any():
        raise SingleClassError("EER needs both classes")

    fpr, fnr = _roc_points(scores, is_pos)
    # thresholds matching the operating points (index 0 = above max score)
    uniq = np.unique(scores)[::-1]
    thresholds = np.concatenate([[uniq[0] + 1.0], uniq])

    diff = fnr - fpr
    candidates = []
    for i in range(len(diff)):
        if diff[i] == 0.0:
            candidates.append((float(fpr[i]), float(thresholds[i])))
    for i in range(len(diff) - 1):
        if (diff[i] < 0 < diff[i + 1]) or (diff[i] > 0 > diff[i + 1]):
            lam = diff[i] / (diff[i] - diff[i + 1])
            value = (1 - lam) * fpr[i] + lam * fpr[i + 1]
            thr = (1 - lam) * thresholds[i] + lam * thresholds[i + 1]
            candidates.append((float(value), float(thr)))
    if not candidates:
        # monotone corner case: take the point minimizing |FNR - FPR|
        k = int(np.argmin(np.abs(diff)))
        candidates.append((float((fpr[k] + fnr[k]) / 2), float(thresholds[k])))
    value, threshold = min(candidates, key=lambda c: c[0])
    return value, threshold


def auroc(trials) -> float:
    """Probability that a random deepfake outranks a random bonafide (ties 0.5)."""
    if not trials:
        raise EmptyTrialsError("no trials to score")
    scores, is_pos = _split_scores(trials)
    if is_pos.all() or not is_pos.any():
        raise SingleClassError("AUROC needs both classes")
    n_pos = int(np.sum(is_pos))
    n_neg = len(is_pos) - n_pos

    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i: j + 1]] = (i + j) / 2.0 + 1.0  # mid-rank, 1-based
        i = j + 1
    rank_sum = float(np.sum(ranks[is_pos]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def evaluate(trials, threshold: float = 0.5) -> MetricsReport:
    """Full report: confusion counts at the threshold plus EER and AUROC."""
    eer_value, _ = eer(trials)
    return confusion_metrics(trials, threshold, eer_value=eer_value,
                             auroc_value=auroc(trials))
