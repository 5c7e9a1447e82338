"""Exemplar selection, multi-exemplar voting, and evaluation metrics.

AIoU treats the transition list of each sample as 1-D boxes spanning
consecutive transitions and scores the overlap between predicted and
ground-truth boxes; Spearman is the Pearson correlation of average ranks;
relative L2 is the mean absolute score error normalized by the dataset's
ground-truth score range (the printed convention, despite the name).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Instance, ProcedureAnnotation


class NoExemplarAvailableError(ValueError):
    """No eligible exemplar exists for a query under the selection mode."""


class EmptyListError(ValueError):
    """Voting over zero pair predictions."""


class LengthMismatchError(ValueError):
    """Prediction/ground-truth transition lists disagree in length."""


class DegenerateSeriesError(ValueError):
    """Rank correlation is undefined: a series has zero rank variance."""


class ZeroRangeError(ValueError):
    """Score range is empty."""


WITH_DN = "with_dn"
WITHOUT_DN = "without_dn"


@dataclass
class MetricReport:
    aiou: dict[float, float]
    spearman_rho: float
    relative_l2: float
    n: int
    extras: dict[str, float] = field(default_factory=dict)

    def validate(self) -> "MetricReport":
        thresholds = sorted(self.aiou)
        values = [self.aiou[d] for d in thresholds]
        if any(b > a for a, b in zip(values, values[1:])):
            raise ValueError("AIoU must be non-increasing in the threshold")
        if not (-1.0 - 1e-12 <= self.spearman_rho <= 1.0 + 1e-12):
            raise ValueError(f"spearman out of range: {self.spearman_rho}")
        if not np.isfinite(self.relative_l2) or self.relative_l2 < 0:
            raise ValueError(f"bad relative_l2: {self.relative_l2}")
        return self

    def to_json(self) -> str:
        return json.dumps(
            {
                "aiou": {str(k): v for k, v in sorted(self.aiou.items())},
                "spearman_rho": self.spearman_rho,
                "relative_l2": self.relative_l2,
                "relative_l2_x100": self.relative_l2 * 100.0,
                "n": self.n,
                **({"extras": self.extras} if self.extras else {}),
            },
            indent=2,
        )

    def table_row(self) -> str:
        """One row shaped like the standard results tables:
        AIoU@0.5, AIoU@0.75, rho, R-l2 x100."""
        a50 = self.aiou.get(0.5)
        a75 = self.aiou.get(0.75)
        fmt = lambda v: "/" if v is None else f"{100 * v:.2f}"
        return (
            f"{fmt(a50):>8} {fmt(a75):>8} "
            f"{self.spearman_rho:>8.4f} {self.relative_l2 * 100:>8.4f}"
        )


def select_exemplars(
    train_set: Sequence[Instance],
    query: ProcedureAnnotation,
    m: int,
    mode: str = WITH_DN,
    seed: int | None = 0,
    rng: np.random.Generator | None = None,
) -> list[Instance]:
    """Pick M exemplars for a query, excluding the query itself.

    with_dn restricts the pool to instances sharing the query's action code;
    without_dn draws from the whole training set. Sampling is uniform and
    without replacement whenever the pool is large enough.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if mode not in (WITH_DN, WITHOUT_DN):
        raise ValueError(f"unknown exemplar mode: {mode}")
    pool = [
        inst
        for inst in train_set
        if inst.annotation.video_id != query.video_id
        and (mode == WITHOUT_DN or inst.annotation.action_code == query.action_code)
    ]
    if not pool:
        raise NoExemplarAvailableError(
            f"no exemplar for {query.video_id} ({query.action_code}) under {mode}"
        )
    rng = rng if rng is not None else np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=m, replace=len(pool) < m)
    return [pool[int(i)] for i in idx]


def vote(pair_predictions: Sequence[tuple[float, float]]) -> float:
    """Multi-exemplar voting: mean over pairs of (relative score + exemplar
    score)."""
    if not pair_predictions:
        raise EmptyListError("no pair predictions to vote over")
    return float(np.mean([rel + y_z for rel, y_z in pair_predictions]))


def _merged_length(intervals: list[tuple[float, float]]) -> float:
    segs = sorted((a, b) for a, b in intervals if b > a)
    total, cur_lo, cur_hi = 0.0, None, None
    for a, b in segs:
        if cur_hi is None or a > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = a, b
        else:
            cur_hi = max(cur_hi, b)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def interval_iou(pred: Sequence[int], gt: Sequence[int]) -> float:
    """IoU between the transition boxes of one sample.

    Boxes span consecutive transitions: [t_k, t_{k+1}] for k = 1..L-1. The
    measure is interval length, with overlapping boxes merged, so the L=2
    case reduces to a single-interval overlap.
    """
    if len(pred) != len(gt):
        raise LengthMismatchError(f"{len(pred)} predictions vs {len(gt)} targets")
    if len(pred) < 2:
        raise LengthMismatchError("need at least two transitions per sample")
    p_boxes = [(float(a), float(b)) for a, b in zip(pred, pred[1:])]
    g_boxes = [(float(a), float(b)) for a, b in zip(gt, gt[1:])]
    p_len = _merged_length(p_boxes)
    g_len = _merged_length(g_boxes)
    union = _merged_length(p_boxes + g_boxes)
    if union == 0.0:
        return 1.0
    inter = p_len + g_len - union
    return inter / union


def aiou(
    pred_transitions: Sequence[Sequence[int]],
    gt_transitions: Sequence[Sequence[int]],
    d: float,
) -> float:
    """Fraction of samples whose transition-box IoU reaches threshold d."""
    if len(pred_transitions) != len(gt_transitions):
        raise LengthMismatchError(
            f"{len(pred_transitions)} samples vs {len(gt_transitions)}"
        )
    if not pred_transitions:
        raise LengthMismatchError("empty sample list")
    hits = sum(
        interval_iou(p, g) >= d for p, g in zip(pred_transitions, gt_transitions)
    )
    return hits / len(pred_transitions)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(y: Sequence[float], y_hat: Sequence[float]) -> float:
    """Spearman's rank correlation: Pearson correlation of average ranks."""
    if len(y) != len(y_hat):
        raise LengthMismatchError(f"{len(y)} vs {len(y_hat)} values")
    if len(y) < 2:
        raise DegenerateSeriesError("need at least two samples")
    ra = average_ranks(y) - (len(y) + 1) / 2.0
    rb = average_ranks(y_hat) - (len(y) + 1) / 2.0
    denom = np.sqrt((ra**2).sum() * (rb**2).sum())
    if denom == 0.0:
        raise DegenerateSeriesError("a series has zero rank variance")
    return float((ra * rb).sum() / denom)


def relative_l2(
    y: Sequence[float], y_hat: Sequence[float], y_max: float, y_min: float
) -> float:
    """Mean absolute error normalized by the ground-truth score range."""
    if y_max <= y_min:
        raise ZeroRangeError(f"empty score range [{y_min}, {y_max}]")
    if len(y) != len(y_hat):
        raise LengthMismatchError(f"{len(y)} vs {len(y_hat)} values")
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(y_hat, dtype=np.float64)
    return float(np.abs(a - b).mean() / (y_max - y_min))
