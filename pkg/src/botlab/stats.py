"""Statistical tests used by the evaluation pipeline.

All tests are exact or resampling-based where feasible; tail
probabilities for the chi-square and t reference distributions are
assembled here from the regularized incomplete gamma/beta special
functions rather than pulled from a statistics library.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc, gammaincc

from .seeds import numpy_rng

# groups jointly this small are enumerated exactly instead of resampled
EXACT_ENUMERATION_LIMIT = 12


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    n_resamples: int | None = None
    df: int | None = None


def chi2_sf(x: float, df: int) -> float:
    """Upper tail P(X >= x) of the chi-square distribution via the
    regularized incomplete gamma function."""
    if df < 1:
        raise ValueError(f"df={df} must be >= 1")
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail P(|T| >= |t|) of Student's t via the regularized
    incomplete beta function."""
    if df < 1:
        raise ValueError(f"df={df} must be >= 1")
    t = abs(float(t))
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def permutation_test(a: Sequence[float], b: Sequence[float],
                     n_resamples: int = 10_000, seed: int = 0,
                     exact_if_small: bool = True) -> TestResult:
    """Two-sided permutation test on the difference of group means.

    With ``exact_if_small`` and at most 12 observations total, every
    group assignment is enumerated and the p-value is the exact
    proportion with |difference| >= |observed|. Otherwise a Monte Carlo
    estimate is used with the (1 + hits) / (1 + n_resamples) convention.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if not a or not b:
        raise ValueError("both groups must be non-empty")
    if n_resamples < 1:
        raise ValueError(f"n_resamples={n_resamples} must be >= 1")
    na = len(a)
    pool = a + b
    n = len(pool)
    observed = sum(a) / na - sum(b) / (n - na)
    threshold = abs(observed) - 1e-12 * max(1.0, abs(observed))

    if exact_if_small and n <= EXACT_ENUMERATION_LIMIT:
        hits = 0
        total = 0
        pool_sum = sum(pool)
        for combo in itertools.combinations(range(n), na):
            sa = sum(pool[i] for i in combo)
            diff = sa / na - (pool_sum - sa) / (n - na)
            hits += abs(diff) >= threshold
            total += 1
        return TestResult(statistic=observed, p_value=hits / total,
                          method="exact", n_resamples=total)

    rng = numpy_rng(seed, "permutation")
    arr = np.asarray(pool, dtype=float)
    hits = 0
    done = 0
    # chunk so memory stays bounded for large resample counts
    chunk = max(1, min(n_resamples, 2_000_000 // max(n, 1)))
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        perms = rng.permuted(np.tile(arr, (m, 1)), axis=1)
        diffs = perms[:, :na].mean(axis=1) - perms[:, na:].mean(axis=1)
        hits += int(np.count_nonzero(np.abs(diffs) >= threshold))
        done += m
    p = (1 + hits) / (1 + n_resamples)
    return TestResult(statistic=observed, p_value=p,
                      method="monte_carlo", n_resamples=n_resamples)


def bh_fdr(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjusted p-values, original order."""
    ps = [float(p) for p in p_values]
    for p in ps:
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"p-value {p} outside [0, 1]")
    m = len(ps)
    if m == 0:
        return []
    order = sorted(range(m), key=lambda i: ps[i])
    adjusted = [0.0] * m
    running_min = 1.0
    for rank in range(m, 0, -1):
        idx = order[rank - 1]
        running_min = min(running_min, ps[idx] * m / rank)
        adjusted[idx] = running_min
    return adjusted


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    p_value: float
    stderr: float
    n: int


def ols_regression(x: Sequence[float], y: Sequence[float]) -> RegressionFit:
    """Simple least squares of y on x with a slope t-test (n - 2 df)."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((v - mx) ** 2 for v in x)
    if sxx == 0.0:
        raise ValueError("x is constant; slope undefined")
    sxy = sum((xv - mx) * (yv - my) for xv, yv in zip(x, y))
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_res = sum((yv - (intercept + slope * xv)) ** 2
                 for xv, yv in zip(x, y))
    ss_tot = sum((yv - my) ** 2 for yv in y)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    var_res = ss_res / (n - 2)
    stderr = math.sqrt(var_res / sxx)
    if stderr == 0.0:
        p = 1.0 if slope == 0.0 else 0.0
    else:
        p = t_sf_two_sided(slope / stderr, n - 2)
    return RegressionFit(slope=slope, intercept=intercept,
                         r_squared=r_squared, p_value=p, stderr=stderr, n=n)


def chi_square_independence(table: Sequence[Sequence[float]]) -> TestResult:
    """Chi-square test of independence for a 2x2 count table, without
    continuity correction."""
    if len(table) != 2 or any(len(row) != 2 for row in table):
        raise ValueError("table must be 2x2")
    (a, b), (c, d) = ((float(v) for v in row) for row in table)
    for v in (a, b, c, d):
        if v < 0:
            raise ValueError(f"negative count {v}")
    n = a + b + c + d
    margins = (a + b, c + d, a + c, b + d)
    if any(mrg == 0 for mrg in margins):
        raise ValueError("table has a zero margin; independence undefined")
    stat = n * (a * d - b * c) ** 2 / (margins[0] * margins[1] *
                                       margins[2] * margins[3])
    return TestResult(statistic=stat, p_value=chi2_sf(stat, 1),
                      method="chi_square", df=1)


def mcnemar(b: int, c: int, corrected: bool = True) -> TestResult:
    """McNemar's test on discordant pair counts.

    ``b``/``c`` are the two off-diagonal counts. The default applies the
    continuity correction, with statistic 0 when |b - c| <= 1; the
    uncorrected form is (b - c)^2 / (b + c).
    """
    if b < 0 or c < 0:
        raise ValueError("discordant counts must be non-negative")
    total = b + c
    if total == 0:
        raise ValueError("no discordant pairs; test undefined")
    if corrected:
        stat = 0.0 if abs(b - c) <= 1 else (abs(b - c) - 1) ** 2 / total
    else:
        stat = (b - c) ** 2 / total
    return TestResult(statistic=stat, p_value=chi2_sf(stat, 1),
                      method="mcnemar_corrected" if corrected else "mcnemar",
                      df=1)
