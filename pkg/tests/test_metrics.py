import itertools

import numpy as np
import pytest
from scipy.stats import rankdata, spearmanr, wilcoxon
from sklearn.metrics import balanced_accuracy_score, cohen_kappa_score

from iqestimation.exceptions import DegenerateInput, EmptyMatrix, LengthMismatch
from iqestimation.metrics import (
    ConfusionMatrix,
    confusion_matrix,
    relative_improvement,
    significance_marker,
    spearman_rho,
    uar,
    unweighted_kappa,
    weighted_kappa,
    wilcoxon_signed_rank,
)

LABELS = [1, 2, 3, 4, 5]


def random_pairs(rng, size=200):
    reference = rng.integers(1, 6, size=size)
    noise = rng.integers(-1, 2, size=size) * (rng.random(size) < 0.5)
    hypothesis = np.clip(reference + noise, 1, 5)
    return reference, hypothesis


def test_confusion_matrix_orientation():
    cm = confusion_matrix([1, 1, 2], [1, 2, 2])
    assert cm.counts.shape == (5, 5)
    assert cm.counts[0, 0] == 1
    assert cm.counts[0, 1] == 1
    assert cm.counts[1, 1] == 1
    assert cm.total == 3
    assert (cm + cm).total == 6


def test_uar_ignores_absent_classes():
    cm = confusion_matrix([1, 1, 5, 5], [1, 2, 5, 5])
    assert uar(cm) == pytest.approx(0.75)


def test_uar_of_empty_matrix():
    with pytest.raises(EmptyMatrix):
        uar(confusion_matrix([], []))


@pytest.mark.parametrize("seed", range(100))
def test_metrics_match_reference_implementations(seed):
    rng = np.random.default_rng(seed)
    reference, hypothesis = random_pairs(rng)
    cm = confusion_matrix(reference, hypothesis)
    assert uar(cm) == pytest.approx(balanced_accuracy_score(reference, hypothesis), abs=1e-9)
    assert weighted_kappa(cm) == pytest.approx(
        cohen_kappa_score(reference, hypothesis, labels=LABELS, weights="linear"), abs=1e-9
    )
    assert unweighted_kappa(reference.tolist(), hypothesis.tolist()) == pytest.approx(
        cohen_kappa_score(reference, hypothesis), abs=1e-9
    )
    assert spearman_rho(reference, hypothesis) == pytest.approx(spearmanr(reference, hypothesis)[0], abs=1e-9)


def brute_force_weighted_kappa(cm: ConfusionMatrix) -> float:
    counts = cm.counts.astype(float)
    k = counts.shape[0]
    total = counts.sum()
    rows, cols = counts.sum(axis=1), counts.sum(axis=0)
    observed = expected = 0.0
    for i in range(k):
        for j in range(k):
            w = abs(i - j) / (k - 1)
            observed += w * counts[i, j] / total
            expected += w * rows[i] * cols[j] / total**2
    return 1.0 - observed / expected


@pytest.mark.parametrize("seed", range(20))
def test_weighted_kappa_formula(seed):
    reference, hypothesis = random_pairs(np.random.default_rng(1000 + seed), size=50)
    cm = confusion_matrix(reference, hypothesis)
    assert weighted_kappa(cm) == pytest.approx(brute_force_weighted_kappa(cm), abs=1e-9)


def test_kappa_edge_cases():
    perfect = confusion_matrix([3, 3, 3], [3, 3, 3])
    assert weighted_kappa(perfect) == 1.0
    with pytest.raises(EmptyMatrix):
        weighted_kappa(confusion_matrix([], []))
    assert unweighted_kappa([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    with pytest.raises(LengthMismatch):
        unweighted_kappa([1], [1, 2])
    assert unweighted_kappa([4, 4], [4, 4]) == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_weighted_kappa_on_two_labels_is_cohens_kappa(seed):
    rng = np.random.default_rng(2000 + seed)
    reference = rng.integers(1, 3, size=40)
    hypothesis = np.where(rng.random(40) < 0.7, reference, 3 - reference)
    cm = confusion_matrix(reference, hypothesis, labels=(1, 2))
    assert weighted_kappa(cm) == pytest.approx(unweighted_kappa(reference.tolist(), hypothesis.tolist()), abs=1e-9)


def test_kappa_of_independent_labels_is_near_zero():
    rng = np.random.default_rng(7)
    reference = rng.integers(1, 6, size=20000)
    hypothesis = rng.integers(1, 6, size=20000)
    assert abs(weighted_kappa(confusion_matrix(reference, hypothesis))) < 0.03
    assert abs(unweighted_kappa(reference.tolist(), hypothesis.tolist())) < 0.03


def test_spearman_with_ties():
    x = [1, 2, 2, 3, 4, 4, 4, 5]
    y = [2, 1, 3, 3, 5, 4, 4, 5]
    assert spearman_rho(x, y) == pytest.approx(spearmanr(x, y)[0], abs=1e-12)
    assert spearman_rho([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(DegenerateInput):
        spearman_rho([1, 1, 1], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        spearman_rho([1, 2], [1])


def brute_force_wilcoxon(d):
    """Two-sided p from all 2^m sign assignments of the ranked |d|."""
    d = np.asarray(d, dtype=float)
    d = d[d != 0]
    m = len(d)
    if m == 0:
        return 1.0
    doubled = np.rint(2 * rankdata(np.abs(d))).astype(int)
    total = int(doubled.sum())
    observed = int(doubled[d > 0].sum())
    w = min(observed, total - observed)
    hits = 0
    for signs in itertools.product((0, 1), repeat=m):
        plus = int(np.dot(signs, doubled))
        if min(plus, total - plus) <= w:
            hits += 1
    return hits / 2**m


@pytest.mark.parametrize("m", range(1, 13))
def test_exact_wilcoxon_matches_enumeration(m):
    rng = np.random.default_rng(m)
    for _ in range(5):
        # small integer differences produce ties and zeros
        a = rng.integers(0, 6, size=m).astype(float)
        b = rng.integers(0, 6, size=m).astype(float)
        result = wilcoxon_signed_rank(a, b)
        assert result.method == "exact"
        assert result.p_value == pytest.approx(brute_force_wilcoxon(a - b), abs=1e-12)


def test_ten_folds_all_better():
    a = [0.50, 0.52, 0.48, 0.51, 0.55, 0.49, 0.53, 0.50, 0.54, 0.47]
    b = [x - 0.01 * (i + 1) for i, x in enumerate(a)]
    result = wilcoxon_signed_rank(a, b)
    assert result.p_value == pytest.approx(2 / 1024, abs=1e-12)
    assert result.statistic == 0.0
    assert result.marker == "**"


def test_identical_samples():
    result = wilcoxon_signed_rank([0.4, 0.5, 0.6], [0.4, 0.5, 0.6])
    assert result.p_value == 1.0
    assert result.n == 0


def test_normal_approximation_matches_scipy():
    rng = np.random.default_rng(3)
    a = rng.normal(0.5, 0.05, size=40)
    b = a + rng.normal(0.01, 0.03, size=40)
    result = wilcoxon_signed_rank(a, b)
    assert result.method == "normal-approx"
    expected = wilcoxon(a, b, correction=False, method="approx").pvalue
    assert result.p_value == pytest.approx(expected, abs=1e-9)


def test_wilcoxon_length_mismatch():
    with pytest.raises(LengthMismatch):
        wilcoxon_signed_rank([1.0], [1.0, 2.0])


@pytest.mark.parametrize("p,marker", [(0.001, "**"), (0.01, "*"), (0.049, "*"), (0.05, ""), (None, ""), (float("nan"), "")])
def test_significance_marker(p, marker):
    assert significance_marker(p) == marker


def test_relative_improvement():
    assert relative_improvement(0.549, 0.4954) == pytest.approx(0.10819, abs=1e-4)
    with pytest.raises(DegenerateInput):
        relative_improvement(0.5, 0.0)
