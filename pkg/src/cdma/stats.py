"""Small statistics toolkit: Student t-tests, Cohen's d, Spearman rho, mean/SD.

The Student-t tail is evaluated through the regularized incomplete beta
function, computed with a modified-Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientData

_FPMIN = 1e-300
_EPS = 1e-16


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p_two_tailed: float
    effect_size: Optional[float] = None
    flag: Optional[str] = None

    __test__ = False  # not a pytest class

    @property
    def p(self) -> float:
        return self.p_two_tailed

    def as_dict(self) -> dict:
        return {"t": self.statistic, "df": self.df, "p": self.p_two_tailed,
                "d": self.effect_size, "flag": self.flag}


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _FPMIN if abs(d) < _FPMIN else d
        c = 1.0 + aa / c
        c = _FPMIN if abs(c) < _FPMIN else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _FPMIN if abs(d) < _FPMIN else d
        c = 1.0 + aa / c
        c = _FPMIN if abs(c) < _FPMIN else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_tailed(t: float, df: float) -> float:
    if math.isnan(t):
        return float("nan")
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc_reg(df / 2.0, 0.5, df / (df + t * t)))


def _check(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientData("each sample needs at least 2 observations")
    return a, b


def pooled_sd(a, b) -> float:
    a, b = _check(a, b)
    n1, n2 = len(a), len(b)
    ss = ((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()
    return math.sqrt(ss / (n1 + n2 - 2))


def cohens_d(a, b) -> float:
    """``(mean(a) - mean(b)) / pooled SD``; nan when the pooled SD is zero."""
    a, b = _check(a, b)
    sp = pooled_sd(a, b)
    diff = a.mean() - b.mean()
    if sp == 0.0:
        return 0.0 if diff == 0.0 else float("nan")
    return float(diff / sp)


def t_independent_pooled(a, b, welch: bool = False) -> TestResult:
    """Two-sample t-test of ``a`` against ``b``; pooled variance unless ``welch``."""
    a, b = _check(a, b)
    n1, n2 = len(a), len(b)
    diff = float(a.mean() - b.mean())
    v1, v2 = a.var(ddof=1), b.var(ddof=1)
    if welch:
        se2 = v1 / n1 + v2 / n2
        df = se2 ** 2 / ((v1 / n1) ** 2 / (n1 - 1) + (v2 / n2) ** 2 / (n2 - 1)) if se2 > 0 else n1 + n2 - 2.0
    else:
        sp2 = ((n1 - 1) * v1 + (n2 - 1) * v2) / (n1 + n2 - 2)
        se2 = sp2 * (1.0 / n1 + 1.0 / n2)
        df = float(n1 + n2 - 2)
    d = cohens_d(a, b)
    if se2 == 0.0:
        if diff == 0.0:
            return TestResult(0.0, df, 1.0, d, flag="zero variance, equal means")
        return TestResult(math.copysign(math.inf, diff), df, 0.0, d,
                          flag="zero variance, unequal means")
    t = diff / math.sqrt(se2)
    return TestResult(t, df, t_sf_two_tailed(t, df), d)


def rankdata(x) -> np.ndarray:
    """1-based ranks, ties receive the average of the ranks they span."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return float("nan")
    return float(np.clip(a @ b / denom, -1.0, 1.0))


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p: float
    n: int
    flag: Optional[str] = None

    def __iter__(self):
        return iter((self.rho, self.p))


def spearman(a, b) -> SpearmanResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) != len(b):
        raise ValueError(f"length mismatch {len(a)} vs {len(b)}")
    n = len(a)
    if n < 5:
        raise InsufficientData(f"Spearman needs n >= 5, got {n}")
    rho = pearson(rankdata(a), rankdata(b))
    if math.isnan(rho):
        return SpearmanResult(float("nan"), float("nan"), n, flag="constant input")
    if abs(rho) == 1.0:
        return SpearmanResult(rho, 0.0, n)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return SpearmanResult(rho, t_sf_two_tailed(t, n - 2), n)


def spearman_exact_p(a, b) -> float:
    """Two-tailed permutation p-value over all n! orderings (n <= 9)."""
    a = np.asarray(a, dtype=float)
    if len(a) > 9:
        raise ValueError("exact permutation p limited to n <= 9")
    ra, rb = rankdata(a), rankdata(b)
    observed = abs(pearson(ra, rb))
    hits = total = 0
    for perm in permutations(range(len(rb))):
        total += 1
        if abs(pearson(ra, rb[list(perm)])) >= observed - 1e-12:
            hits += 1
    return hits / total


def mean_std(xs: Sequence[float]):
    """Mean and Bessel-corrected standard deviation."""
    xs = np.asarray(xs, dtype=float)
    if len(xs) < 2:
        raise InsufficientData("mean_std needs at least 2 values")
    m = float(xs.sum() / len(xs))
    return m, math.sqrt(float(((xs - m) ** 2).sum()) / (len(xs) - 1))
