"""Prediction-precision metrics: concordance (AUC) and mean squared error.

The concordance estimate is the two-sample Mann-Whitney statistic over all
(positive, negative) score pairs.  Ties between a positive and a negative
score count as concordant by default ("ge" convention); an optional "half"
convention counts them as 1/2.  The default variance estimate is the
Hanley-McNeil approximation; DeLong's estimator is available as an
alternative.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateClassesError
from .validation import check_binary


@dataclass(frozen=True)
class AucResult:
    auc: float
    variance: float
    n_pos: int
    n_neg: int


def _split_scores(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = check_binary(labels, name="labels")
    if scores.shape[0] != labels.shape[0]:
        raise ValueError(
            f"scores and labels disagree in length: {scores.shape[0]} vs {labels.shape[0]}"
        )
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    pos = scores[labels == 1.0]
    neg = scores[labels == 0.0]
    if pos.size == 0 or neg.size == 0:
        raise DegenerateClassesError("need at least one positive and one negative label")
    return pos, neg


def auc_estimate(scores, labels, tie_half: bool = False) -> float:
    """Mann-Whitney concordance of ``scores`` against binary ``labels``.

    Equals ``mean over pairs of 1[pos >= neg]`` under the default "ge" tie
    convention, or with ties counted 1/2 when ``tie_half`` is set.  Runs in
    O(n log n); the pair count is accumulated in exact integer arithmetic so
    the result matches the brute-force double loop bit for bit.
    """
    pos, neg = _split_scores(scores, labels)
    neg_sorted = np.sort(neg)
    ge_pairs = int(np.searchsorted(neg_sorted, pos, side="right").sum())
    if not tie_half:
        return ge_pairs / (pos.size * neg.size)
    gt_pairs = int(np.searchsorted(neg_sorted, pos, side="left").sum())
    # ties get half weight: (gt + ge) / 2 counts each tie once at 1/2
    return (gt_pairs + ge_pairs) / (2 * pos.size * neg.size)


def hanley_mcneil_variance(auc: float, n_pos: int, n_neg: int) -> float:
    """Hanley-McNeil variance approximation for an AUC estimate."""
    if n_pos < 1 or n_neg < 1:
        raise ValueError("need at least one observation in each class")
    a = float(auc)
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"auc must lie in [0, 1], got {a}")
    q1 = a / (2.0 - a)
    q2 = 2.0 * a * a / (1.0 + a)
    num = a * (1.0 - a) + (n_pos - 1) * (q1 - a * a) + (n_neg - 1) * (q2 - a * a)
    return num / (n_pos * n_neg)


def delong_variance(scores, labels, tie_half: bool = True) -> float:
    """DeLong's variance estimator for the Mann-Whitney AUC.

    Computed from the per-observation placement values; ties weighted 1/2
    by convention unless ``tie_half`` is disabled.
    """
    pos, neg = _split_scores(scores, labels)
    n_pos, n_neg = pos.size, neg.size
    neg_sorted = np.sort(neg)
    pos_sorted = np.sort(pos)
    ge_p = np.searchsorted(neg_sorted, pos, side="right").astype(np.float64)
    gt_p = np.searchsorted(neg_sorted, pos, side="left").astype(np.float64)
    le_n = n_pos - np.searchsorted(pos_sorted, neg, side="left").astype(np.float64)
    lt_n = n_pos - np.searchsorted(pos_sorted, neg, side="right").astype(np.float64)
    if tie_half:
        v_pos = 0.5 * (ge_p + gt_p) / n_neg
        v_neg = 0.5 * (le_n + lt_n) / n_pos
    else:
        v_pos = ge_p / n_neg
        v_neg = le_n / n_pos
    s_pos = v_pos.var(ddof=1) if n_pos > 1 else 0.0
    s_neg = v_neg.var(ddof=1) if n_neg > 1 else 0.0
    return float(s_pos / n_pos + s_neg / n_neg)


def auc_with_variance(
    scores,
    labels,
    tie_half: bool = False,
    variance_method: str = "hanley-mcneil",
) -> AucResult:
    """Concordance estimate bundled with its variance estimate."""
    pos, neg = _split_scores(scores, labels)
    auc = auc_estimate(scores, labels, tie_half=tie_half)
    if variance_method == "hanley-mcneil":
        var = hanley_mcneil_variance(auc, pos.size, neg.size)
    elif variance_method == "delong":
        var = delong_variance(scores, labels)
    else:
        raise ValueError(
            f"unknown variance_method {variance_method!r}, "
            "expected 'hanley-mcneil' or 'delong'"
        )
    return AucResult(auc=auc, variance=var, n_pos=int(pos.size), n_neg=int(neg.size))


class MseResult(NamedTuple):
    mse: float
    variance: float


def mse_criterion(fitted, observed) -> MseResult:
    """Mean squared error and the variance of its estimator.

    The variance is the sample variance of the squared residuals divided by
    the sample size.
    """
    fitted = np.asarray(fitted, dtype=np.float64).reshape(-1)
    observed = np.asarray(observed, dtype=np.float64).reshape(-1)
    if fitted.shape != observed.shape:
        raise ValueError("fitted and observed must have identical shape")
    n = fitted.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    sq = (observed - fitted) ** 2
    return MseResult(mse=float(sq.mean()), variance=float(sq.var(ddof=1) / n))
