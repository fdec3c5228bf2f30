"""Classification and agreement metrics.

All functions are pure and operate on plain sequences so they can be
checked against brute-force oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateMarginalsError,
    LengthMismatchError,
    NoPositivesAnywhereError,
    NoPositivesError,
)


@dataclass(frozen=True)
class AgreementStats:
    p_observed: float
    p_expected: float
    kappa: float


def confusion_counts(preds: Sequence[int], golds: Sequence[int], positive_class=1):
    """(tp, fp, fn, tn) with respect to ``positive_class``."""
    if len(preds) != len(golds) or len(preds) == 0:
        raise LengthMismatchError(f"preds ({len(preds)}) vs golds ({len(golds)}), need equal and >= 1")
    tp = fp = fn = tn = 0
    for p, g in zip(preds, golds):
        if p == positive_class and g == positive_class:
            tp += 1
        elif p == positive_class:
            fp += 1
        elif g == positive_class:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def f1(preds: Sequence[int], golds: Sequence[int], positive_class=1) -> float:
    """Harmonic mean of precision and recall for the positive class.

    Raises when neither predictions nor gold contain the positive class;
    an F1 would be meaningless there rather than perfect.
    """
    tp, fp, fn, _ = confusion_counts(preds, golds, positive_class)
    if tp == 0 and fp == 0 and fn == 0:
        raise NoPositivesAnywhereError(
            f"class {positive_class!r} appears in neither predictions nor gold"
        )
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def macro_f1(preds_by_cat: Sequence[Sequence[int]], golds_by_cat: Sequence[Sequence[int]]) -> float:
    """Unweighted mean of per-category F1 (positive class = presence)."""
    if len(preds_by_cat) != len(golds_by_cat):
        raise LengthMismatchError("per-category prediction and gold lists must align")
    scores = [f1(p, g, positive_class=1) for p, g in zip(preds_by_cat, golds_by_cat)]
    return float(np.mean(scores))


def average_precision(scores: Sequence[float], golds: Sequence[int]) -> float:
    """Area under the precision-recall rank walk, non-interpolated.

    Ranks descend by score; ties break by original index (stable), so the
    result is deterministic across platforms.
    """
    if len(scores) != len(golds) or len(scores) == 0:
        raise LengthMismatchError(f"scores ({len(scores)}) vs golds ({len(golds)}), need equal and >= 1")
    golds = np.asarray(golds, dtype=int)
    n_pos = int(golds.sum())
    if n_pos == 0:
        raise NoPositivesError("average precision needs at least one gold positive")
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if golds[idx] == 1:
            hits += 1
            total += hits / rank
    return total / n_pos


def cohens_kappa(a: Sequence, b: Sequence) -> AgreementStats:
    """Chance-corrected agreement between two categorical raters.

    Both raters constant on the same value is perfect agreement and
    returns kappa 1.0 even though chance agreement is also 1.
    """
    if len(a) != len(b) or len(a) == 0:
        raise LengthMismatchError(f"rater lengths {len(a)} vs {len(b)}, need equal and >= 1")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    values = set(a) | set(b)
    p_e = 0.0
    for v in values:
        p_e += (sum(1 for x in a if x == v) / n) * (sum(1 for y in b if y == v) / n)
    if p_e >= 1.0:
        if p_o == 1.0:
            return AgreementStats(p_observed=1.0, p_expected=1.0, kappa=1.0)
        raise DegenerateMarginalsError("chance agreement is 1 but observed agreement is not")
    kappa = (p_o - p_e) / (1.0 - p_e)
    return AgreementStats(p_observed=p_o, p_expected=p_e, kappa=kappa)
