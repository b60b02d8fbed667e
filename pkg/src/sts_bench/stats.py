"""Performance metrics, mask AUC, the STS aggregate and the paired t-test."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

ALPHA = 0.05


class UndefinedAUC(ValueError):
    """ROC AUC requested for labels of a single class."""


class PerformanceMetric(str, Enum):
    ACCURACY = "accuracy"
    MSE = "mse"

    @property
    def higher_is_better(self) -> bool:
        return self is PerformanceMetric.ACCURACY


@dataclass(frozen=True)
class TestReport:
    t_statistic: float
    degrees_of_freedom: int
    p_value: float

    __test__ = False  # keep pytest from collecting this as a test class

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA

    def to_dict(self) -> dict:
        return {
            "t_statistic": self.t_statistic,
            "degrees_of_freedom": self.degrees_of_freedom,
            "p_value": self.p_value,
            "significant": self.significant,
        }


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability that a random positive outranks a random negative (ties count half).

    Computed from midranks, which is exactly the pair-counting estimator.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel() > 0.5
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC("ROC AUC needs at least one positive and one negative label")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    # midranks over runs of tied scores
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [scores.size]))
    midranks = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(midranks, ends - starts)
    # concordant + 0.5 * ties, via the Mann-Whitney U statistic (integer-exact in halves)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def median(values: Sequence[float]) -> float:
    values = sorted(float(v) for v in values)
    if not values:
        raise ValueError("median of an empty sequence")
    mid = len(values) // 2
    if len(values) % 2:
        return values[mid]
    return (values[mid - 1] + values[mid]) / 2.0


def oriented_differences(perf_exp, perf_ref, metric: PerformanceMetric) -> list:
    """Per-trial benefit of the explanation student; positive always means it helped."""
    if len(perf_exp) != len(perf_ref):
        raise ValueError(f"length mismatch: {len(perf_exp)} vs {len(perf_ref)}")
    metric = PerformanceMetric(metric)
    sign = 1.0 if metric.higher_is_better else -1.0
    return [sign * (float(e) - float(r)) for e, r in zip(perf_exp, perf_ref)]


def sts(perf_exp, perf_ref, metric: PerformanceMetric = PerformanceMetric.ACCURACY) -> float:
    diffs = oriented_differences(perf_exp, perf_ref, metric)
    if not diffs:
        raise ValueError("STS needs at least one trial")
    return median(diffs)


def paired_t_test(differences: Sequence[float]) -> TestReport:
    """Two-sided one-sample t-test of paired differences against zero."""
    d = [float(x) for x in differences]
    r = len(d)
    if r < 2:
        raise ValueError(f"paired t-test needs at least 2 differences, got {r}")
    nu = r - 1
    mean = math.fsum(d) / r
    var = math.fsum((x - mean) ** 2 for x in d) / nu
    if var == 0.0:
        if mean == 0.0:
            return TestReport(0.0, nu, 1.0)
        return TestReport(math.copysign(math.inf, mean), nu, 0.0)
    t = mean * math.sqrt(r) / math.sqrt(var)
    return TestReport(t, nu, t_two_sided_p(t, nu))


def t_two_sided_p(t: float, nu: float) -> float:
    """Two-sided tail probability of Student's t with ``nu`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return min(1.0, incomplete_beta(nu / (nu + t * t), nu / 2.0, 0.5))


def incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Modified Lentz evaluation of the continued fraction, applied directly when
    ``x < (a + 1) / (a + b + 2)`` and through ``1 - I_{1-x}(b, a)`` otherwise.
    """
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"incomplete_beta: x={x} outside [0, 1]")
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"incomplete_beta: a={a}, b={b} must be positive")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(x, a, b) / a
    return 1.0 - math.exp(log_front) * _beta_cf(1.0 - x, b, a) / b


def _beta_cf(x: float, a: float, b: float, max_iter: int = 10_000, eps: float = 1e-16) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete_beta continued fraction did not converge (x={x}, a={a}, b={b})")


def accuracy(preds, targets) -> float:
    """Fraction of rows whose argmax agrees."""
    preds, targets = np.atleast_2d(preds), np.atleast_2d(targets)
    if preds.shape != targets.shape or preds.shape[0] == 0:
        raise ValueError(f"accuracy: shapes {preds.shape} vs {targets.shape}")
    return float(np.mean(preds.argmax(axis=1) == targets.argmax(axis=1)))


def mse(preds, targets) -> float:
    preds, targets = np.asarray(preds, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise ValueError(f"mse: shapes {preds.shape} vs {targets.shape}")
    return float(np.mean((preds - targets) ** 2))


def performance(preds, targets, metric: PerformanceMetric) -> float:
    metric = PerformanceMetric(metric)
    if metric is PerformanceMetric.ACCURACY:
        return accuracy(preds, targets)
    return mse(preds, targets)
