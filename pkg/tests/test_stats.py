import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sts_bench import stats
from sts_bench.stats import PerformanceMetric, UndefinedAUC


def brute_force_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def t_cdf_tail_oracle(t, nu):
    """Two-sided p from direct high-precision quadrature of the t density."""
    mpmath.mp.dps = 40
    nu = mpmath.mpf(nu)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    density = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)
    tail = mpmath.quad(density, [abs(t), mpmath.inf])
    return float(2 * tail)


# -- roc_auc ------------------------------------------------------------------------


def test_auc_perfect_ranking():
    assert stats.roc_auc([0.9, 0.1], [1, 0]) == 1.0


def test_auc_all_ties():
    assert stats.roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 1]) == 0.5


def test_auc_pair_counting_example():
    # (0.9 vs 0.8) concordant, (0.3 vs 0.8) discordant
    assert stats.roc_auc([0.9, 0.8, 0.3], [1, 0, 1]) == 0.5


def test_auc_single_class_is_undefined():
    with pytest.raises(UndefinedAUC):
        stats.roc_auc([0.1, 0.2], [1, 1])


def test_auc_matches_brute_force_on_random_cases():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(2, 12))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 4, size=n) / 4.0  # coarse grid forces ties
        assert stats.roc_auc(scores, labels) == brute_force_auc(scores.tolist(), labels.tolist())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(0, 1)), min_size=2, max_size=30))
def test_auc_invariant_under_monotone_transform(pairs):
    scores = np.array([p[0] / 10.0 for p in pairs])
    labels = np.array([p[1] for p in pairs])
    if labels.min() == labels.max():
        return
    base = stats.roc_auc(scores, labels)
    assert stats.roc_auc(np.exp(scores / 2.0) * 3.0 + 1.0, labels) == pytest.approx(base, abs=1e-12)
    assert base + stats.roc_auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


# -- median / sts -------------------------------------------------------------------


@pytest.mark.parametrize("values, expected", [([1, 2, 100], 2), ([1, 2, 3, 4], 2.5), ([7.25], 7.25)])
def test_median(values, expected):
    assert stats.median(values) == expected


def test_median_empty():
    with pytest.raises(ValueError):
        stats.median([])


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40))
def test_median_within_range(values):
    m = stats.median(values)
    assert min(values) <= m <= max(values)


def test_sts_identical_is_zero():
    assert stats.sts([0.8, 0.7], [0.8, 0.7]) == 0.0


def test_sts_accuracy_example():
    assert stats.sts([0.9, 0.8, 0.85], [0.7, 0.75, 0.8]) == pytest.approx(0.05)


def test_sts_mse_orientation_positive_means_benefit():
    # lower MSE for the explanation student is a benefit
    assert stats.sts([0.5, 0.6, 0.7], [1.0, 0.9, 0.8], PerformanceMetric.MSE) == pytest.approx(0.3)


def test_sts_length_mismatch():
    with pytest.raises(ValueError):
        stats.sts([1.0], [1.0, 2.0])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=25))
def test_sts_antisymmetric(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    assert stats.sts(a, b) == -stats.sts(b, a)


# -- t-test / incomplete beta -------------------------------------------------------


def test_paired_t_test_example():
    rep = stats.paired_t_test([1, 2, 3, 4, 5])
    assert rep.t_statistic == pytest.approx(3 / (math.sqrt(2.5) / math.sqrt(5)), rel=1e-12)
    assert rep.degrees_of_freedom == 4
    assert rep.p_value == pytest.approx(t_cdf_tail_oracle(rep.t_statistic, 4), abs=1e-10)
    assert rep.p_value == pytest.approx(0.0132, abs=5e-5)
    assert rep.significant


def test_paired_t_test_all_zero():
    rep = stats.paired_t_test([0.0] * 5)
    assert (rep.t_statistic, rep.p_value, rep.significant) == (0.0, 1.0, False)


def test_paired_t_test_constant_nonzero():
    rep = stats.paired_t_test([0.1] * 4)
    assert rep.p_value == 0.0 and rep.significant


def test_paired_t_test_negation_symmetry():
    d = [0.3, -0.1, 0.2, 0.05, 0.4]
    a, b = stats.paired_t_test(d), stats.paired_t_test([-x for x in d])
    assert b.t_statistic == -a.t_statistic
    assert b.p_value == a.p_value


def test_paired_t_test_needs_two():
    with pytest.raises(ValueError):
        stats.paired_t_test([1.0])


def test_incomplete_beta_boundaries():
    assert stats.incomplete_beta(0.0, 2.0, 3.0) == 0.0
    assert stats.incomplete_beta(1.0, 2.0, 3.0) == 1.0
    assert stats.incomplete_beta(0.5, 1.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_incomplete_beta_against_quadrature():
    expected, _ = integrate.quad(lambda u: u * (1 - u) ** 2, 0, 0.4)
    expected /= math.gamma(2) * math.gamma(3) / math.gamma(5)
    assert expected == pytest.approx(0.5248, abs=1e-12)
    assert stats.incomplete_beta(0.4, 2.0, 3.0) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("x,a,b", [(0.1, 0.5, 0.5), (0.7, 3.5, 0.5), (0.99, 50.0, 0.5),
                                   (0.3, 10.0, 20.0), (0.95, 0.5, 12.0)])
def test_incomplete_beta_against_mpmath(x, a, b):
    expected = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert stats.incomplete_beta(x, a, b) == pytest.approx(expected, abs=1e-10)


def test_incomplete_beta_domain():
    with pytest.raises(ValueError):
        stats.incomplete_beta(1.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        stats.incomplete_beta(0.5, 0.0, 1.0)


def test_t_p_values_match_density_quadrature_grid():
    for t, nu in itertools.product([-10.0, -2.5, -0.3, 0.0, 1.1, 4.0, 9.5], [1, 2, 5, 24, 100]):
        assert stats.t_two_sided_p(t, nu) == pytest.approx(t_cdf_tail_oracle(t, nu), abs=1e-8)


# -- accuracy / mse -----------------------------------------------------------------


def test_accuracy_and_mse_perfect():
    y = np.eye(3)[[0, 2, 1]]
    assert stats.accuracy(y, y) == 1.0
    assert stats.mse(y, y) == 0.0


def test_accuracy_all_wrong():
    assert stats.accuracy(np.eye(2)[[1, 0]], np.eye(2)[[0, 1]]) == 0.0


def test_mse_constant_offset():
    t = np.array([[1.0], [2.0], [-3.0]])
    assert stats.mse(t + 0.5, t) == pytest.approx(0.25)


def test_metrics_reject_empty():
    with pytest.raises(ValueError):
        stats.accuracy(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        stats.mse([], [])
