"""Statistical toolbox: frozen fixtures plus enumeration cross-checks.

Reference p-values below were derived offline by high-precision
quadrature of the chi-square / Student-t densities (40 decimal digits,
independent of the incomplete-function implementations used by the
library) and are frozen to 17 significant digits.
"""

import itertools
import math
import random

import pytest

from botlab.stats import (bh_fdr, chi2_sf, chi_square_independence, mcnemar,
                          ols_regression, permutation_test, t_sf_two_sided)

TOL = 1e-8

CHI2_SF = {
    (20.0, 1): 7.7442164310440836e-6,
    (12.8, 1): 0.00034661935113466684,
    (8.1, 1): 0.0044265258579198324,
    (5.0, 2): 0.082084998623898795,
    (1.234, 3): 0.74486178509927693,
    (0.5, 10): 0.99999338828943897,
}

T_SF2 = {
    (2.5, 10): 0.031446844236608804,
    (1.0, 3): 0.39100221895577064,
    (0.1, 30): 0.92100961179027115,
    (4.0, 1): 0.15595826075473865,
}


def test_chi2_sf_against_quadrature():
    for (x, df), want in CHI2_SF.items():
        assert abs(chi2_sf(x, df) - want) < TOL
    assert chi2_sf(0.0, 1) == 1.0
    with pytest.raises(ValueError, match="df"):
        chi2_sf(1.0, 0)


def test_t_sf_against_quadrature():
    for (t, df), want in T_SF2.items():
        assert abs(t_sf_two_sided(t, df) - want) < TOL
    # symmetry in the sign of t
    assert t_sf_two_sided(-2.5, 10) == t_sf_two_sided(2.5, 10)
    assert t_sf_two_sided(0.0, 5) == 1.0


# -- permutation test --------------------------------------------------------

def exact_perm_p(a, b):
    """Brute-force two-sided permutation p-value for the difference of
    means, enumerating all label assignments."""
    pooled = list(a) + list(b)
    na = len(a)
    obs = sum(a) / na - sum(b) / len(b)
    tol = 1e-12 * max(1.0, abs(obs))
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), na):
        ga = [pooled[i] for i in idx]
        gb = [pooled[i] for i in range(len(pooled)) if i not in set(idx)]
        stat = sum(ga) / len(ga) - sum(gb) / len(gb)
        hits += abs(stat) >= abs(obs) - tol
        total += 1
    return hits / total


def test_permutation_exact_small_fixture():
    res = permutation_test([1.0, 2.0], [3.0, 4.0])
    assert res.statistic == -2.0
    assert res.method == "exact"
    assert res.p_value == pytest.approx(2 / 6)
    assert res.n_resamples == 6


def test_permutation_identical_samples():
    res = permutation_test([5.0, 5.0, 5.0], [5.0, 5.0, 5.0])
    assert res.p_value == 1.0


def test_permutation_exact_matches_enumeration():
    rng = random.Random(42)
    for _ in range(8):
        na = rng.randrange(2, 6)
        nb = rng.randrange(2, 7 - max(0, na - 5))
        a = [round(rng.gauss(0, 1), 3) for _ in range(na)]
        b = [round(rng.gauss(0.5, 1), 3) for _ in range(nb)]
        if na + nb > 12:
            continue
        res = permutation_test(a, b)
        assert res.method == "exact"
        assert res.p_value == pytest.approx(exact_perm_p(a, b), abs=1e-12)


def test_permutation_monte_carlo_mode():
    a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
    b = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
    res = permutation_test(a, b, n_resamples=2000, seed=5)
    assert res.method == "monte_carlo"
    assert res.n_resamples == 2000
    assert 0.0 < res.p_value <= 1.0
    again = permutation_test(a, b, n_resamples=2000, seed=5)
    assert again.p_value == res.p_value
    other = permutation_test(a, b, n_resamples=2000, seed=6)
    assert abs(other.p_value - res.p_value) < 0.1  # same target, new draws


def test_permutation_errors():
    with pytest.raises(ValueError, match="non-empty"):
        permutation_test([], [1.0])
    with pytest.raises(ValueError, match="n_resamples"):
        permutation_test([1.0], [2.0], n_resamples=0)


# -- multiple testing ---------------------------------------------------------

def test_bh_fdr_worked_example():
    assert bh_fdr([0.01, 0.04, 0.03, 0.005]) == [0.02, 0.04, 0.04, 0.02]


def bh_oracle(ps):
    """Step-up BH via exact fractions, independent implementation."""
    from fractions import Fraction
    m = len(ps)
    order = sorted(range(m), key=lambda i: ps[i])
    out = [None] * m
    running = Fraction(1)
    for rank in range(m, 0, -1):
        i = order[rank - 1]
        val = min(running, Fraction(ps[i]).limit_denominator(10**12)
                  * m / rank)
        running = val
        out[i] = float(val)
    return out


def test_bh_fdr_matches_fraction_oracle():
    rng = random.Random(11)
    for _ in range(20):
        ps = [round(rng.random(), 6) for _ in range(rng.randrange(1, 12))]
        got = bh_fdr(ps)
        want = bh_oracle(ps)
        assert len(got) == len(want)
        for g, w in zip(got, want):
            assert abs(g - w) < TOL
        # adjusted values never drop below the raw ones
        assert all(g >= p - 1e-15 for g, p in zip(got, ps))


def test_bh_fdr_edge_cases():
    assert bh_fdr([]) == []
    assert bh_fdr([0.5]) == [0.5]
    with pytest.raises(ValueError, match="outside"):
        bh_fdr([0.5, 1.5])


# -- regression ----------------------------------------------------------------

def test_ols_small_fixture():
    fit = ols_regression([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
    assert abs(fit.slope - 1.5) < TOL
    assert abs(fit.intercept - (-2 / 3)) < TOL
    assert abs(fit.r_squared - 27 / 28) < TOL
    assert abs(fit.stderr - math.sqrt(1 / 12)) < TOL
    assert abs(fit.p_value - 0.12103771832367673) < TOL
    assert fit.n == 3


def test_ols_longer_fixtures():
    fit = ols_regression([1, 2, 3, 4, 5, 6, 7, 8],
                         [2.1, 2.9, 4.2, 4.8, 6.3, 6.9, 8.1, 8.8])
    assert abs(fit.slope - 0.98214285714285719) < TOL
    assert abs(fit.intercept - 1.0928571428571427) < TOL
    assert abs(fit.r_squared - 0.99422418742029774) < TOL
    assert abs(fit.p_value - 6.0343736532322371e-8) < TOL
    assert abs(fit.stderr - 0.030560708697603399) < TOL

    fit = ols_regression([0.5, 1.0, 1.5, 2.5, 4.0, 5.5, 6.0, 7.5, 9.0, 10.0],
                         [1.2, 0.8, 2.1, 1.9, 3.6, 4.1, 4.0, 5.2, 6.1, 6.6])
    assert abs(fit.slope - 0.58914354644149575) < TOL
    assert abs(fit.p_value - 1.3505990957888548e-7) < TOL


def test_ols_noiseless_line():
    fit = ols_regression([1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.0])
    assert fit.slope == pytest.approx(2.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.p_value < 1e-6


def test_ols_errors():
    with pytest.raises(ValueError, match="mismatch"):
        ols_regression([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError, match="at least 3"):
        ols_regression([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError, match="constant"):
        ols_regression([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


# -- contingency ----------------------------------------------------------------

def test_chi_square_worked_examples():
    res = chi_square_independence([[10, 0], [0, 10]])
    assert res.statistic == pytest.approx(20.0)
    assert abs(res.p_value - CHI2_SF[(20.0, 1)]) < TOL
    assert res.df == 1

    res = chi_square_independence([[5, 5], [5, 5]])
    assert res.statistic == 0.0
    assert res.p_value == 1.0

    res = chi_square_independence([[9, 1], [1, 9]])
    assert res.statistic == pytest.approx(12.8)
    assert abs(res.p_value - CHI2_SF[(12.8, 1)]) < TOL


def test_chi_square_errors():
    with pytest.raises(ValueError, match="2x2"):
        chi_square_independence([[1, 2, 3], [4, 5, 6]])
    with pytest.raises(ValueError, match="negative"):
        chi_square_independence([[1, -1], [2, 3]])
    with pytest.raises(ValueError, match="margin"):
        chi_square_independence([[0, 0], [3, 4]])


def test_mcnemar_worked_examples():
    res = mcnemar(10, 0)
    assert res.statistic == pytest.approx(8.1)
    assert abs(res.p_value - CHI2_SF[(8.1, 1)]) < TOL

    res = mcnemar(7, 7)
    assert res.statistic == 0.0
    assert res.p_value == 1.0

    # continuity correction floors |b-c| <= 1 at zero
    res = mcnemar(0, 1)
    assert res.statistic == 0.0
    assert res.p_value == 1.0


def test_mcnemar_uncorrected_and_errors():
    res = mcnemar(10, 0, corrected=False)
    assert res.statistic == pytest.approx(10.0)
    with pytest.raises(ValueError, match="non-negative"):
        mcnemar(-1, 2)
    with pytest.raises(ValueError, match="discordant"):
        mcnemar(0, 0)
