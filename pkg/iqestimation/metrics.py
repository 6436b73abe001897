"""
Evaluation and significance measures.

UAR, linearly weighted Cohen's kappa and Spearman's rho score an estimator
against reference IQ labels; unweighted kappa measures rater agreement and
the Wilcoxon signed-rank test compares paired scores of two configurations.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm, rankdata
from sklearn.metrics import cohen_kappa_score
from sklearn.metrics import confusion_matrix as _sk_confusion_matrix

from iqestimation.config import IQ_LABELS, settings
from iqestimation.exceptions import DegenerateInput, EmptyMatrix, LengthMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = reference label and columns = hypothesis label."""

    counts: np.ndarray
    labels: tuple = IQ_LABELS

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts, self.labels)


@dataclass(frozen=True)
class SignificanceResult:
    statistic: float
    n: int
    p_value: float
    method: str

    @property
    def marker(self) -> str:
        return significance_marker(self.p_value)


def confusion_matrix(reference: Sequence[int], hypothesis: Sequence[int], labels=IQ_LABELS) -> ConfusionMatrix:
    if len(reference) != len(hypothesis):
        raise LengthMismatch(f"{len(reference)} reference vs {len(hypothesis)} hypothesis labels")
    if len(reference) == 0:
        return ConfusionMatrix(np.zeros((len(labels), len(labels)), dtype=np.int64), tuple(labels))
    counts = _sk_confusion_matrix(reference, hypothesis, labels=list(labels))
    return ConfusionMatrix(counts.astype(np.int64), tuple(labels))


def uar(cm: ConfusionMatrix) -> float:
    """Mean recall over the classes that occur in the reference."""
    counts = np.asarray(cm.counts, dtype=np.float64)
    support = counts.sum(axis=1)
    present = support > 0
    if not present.any():
        raise EmptyMatrix("no reference labels to score")
    recalls = np.diag(counts)[present] / support[present]
    return float(recalls.mean())


def weighted_kappa(cm: ConfusionMatrix) -> float:
    """Cohen's kappa with linear disagreement weights |i-j|/(K-1)."""
    counts = np.asarray(cm.counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise EmptyMatrix("confusion matrix is empty")
    k = counts.shape[0]
    index = np.arange(k)
    weights = np.abs(index[:, None] - index[None, :]) / (k - 1)
    p = counts / total
    expected = np.outer(p.sum(axis=1), p.sum(axis=0))
    observed_disagreement = float((weights * p).sum())
    expected_disagreement = float((weights * expected).sum())
    if expected_disagreement == 0.0:
        if observed_disagreement == 0.0:
            return 1.0
        raise DegenerateInput("expected disagreement is zero")
    return 1.0 - observed_disagreement / expected_disagreement


def unweighted_kappa(ratings_a: Sequence[int], ratings_b: Sequence[int]) -> float:
    """Cohen's kappa between two raters; 1.0 when both use one shared label throughout."""
    if len(ratings_a) != len(ratings_b):
        raise LengthMismatch(f"{len(ratings_a)} vs {len(ratings_b)} ratings")
    if len(ratings_a) == 0:
        raise EmptyMatrix("no ratings to compare")
    # sklearn divides 0/0 here
    if len(set(ratings_a) | set(ratings_b)) == 1:
        return 1.0
    return float(cohen_kappa_score(ratings_a, ratings_b))


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)} values")
    if len(x) < 2:
        raise DegenerateInput("at least two pairs are required")
    rx = rankdata(np.asarray(x, dtype=np.float64), method="average")
    ry = rankdata(np.asarray(y, dtype=np.float64), method="average")
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx = math.sqrt(float(np.dot(dx, dx)))
    sy = math.sqrt(float(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInput("a constant sequence has no rank correlation")
    return float(np.dot(dx, dy) / (sx * sy))


def _exact_sign_rank_counts(doubled_ranks: Sequence[int]) -> list:
    """Number of sign assignments per value of 2*W+ (all 2^m patterns)."""
    counts = [1] + [0] * int(sum(doubled_ranks))
    reach = 0
    for rank in doubled_ranks:
        reach += rank
        for s in range(reach, rank - 1, -1):
            counts[s] += counts[s - rank]
    return counts


def wilcoxon_signed_rank(
    a: Sequence[float], b: Sequence[float], exact_max: Optional[int] = None
) -> SignificanceResult:
    """Two-sided Wilcoxon signed-rank test on paired scores; zero differences dropped."""
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} paired scores")
    if exact_max is None:
        exact_max = settings.experiments.exact_wilcoxon_max
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0.0]
    m = len(d)
    if m == 0:
        return SignificanceResult(statistic=0.0, n=0, p_value=1.0, method="exact")

    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if m <= exact_max:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _exact_sign_rank_counts(doubled)
        total = sum(doubled)
        w2 = int(round(2 * w))
        if 2 * w2 >= total:
            p = 1.0
        else:
            tail = sum(counts[: w2 + 1]) + sum(counts[total - w2:])
            p = min(1.0, tail / 2**m)
        return SignificanceResult(statistic=w, n=m, p_value=p, method="exact")

    mean = m * (m + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    variance = m * (m + 1) * (2 * m + 1) / 24.0 - float((tie_sizes**3 - tie_sizes).sum()) / 48.0
    if variance <= 0:
        return SignificanceResult(statistic=w, n=m, p_value=1.0, method="normal-approx")
    z = (w - mean) / math.sqrt(variance)
    p = min(1.0, 2.0 * float(norm.cdf(z)))
    return SignificanceResult(statistic=w, n=m, p_value=p, method="normal-approx")


def significance_marker(p_value: Optional[float]) -> str:
    if p_value is None or (isinstance(p_value, float) and math.isnan(p_value)):
        return ""
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


def relative_improvement(value: float, baseline: float) -> float:
    if baseline == 0:
        raise DegenerateInput("relative improvement against a zero baseline")
    return (value - baseline) / baseline
