import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpballistic.frequency import (
    ContinuedFraction,
    PrecisionExhaustedError,
    beta_estimate,
    continued_fraction,
    diophantine_check,
    growth_ratios,
    liouville_quotients,
)
from qpballistic.lattice import GOLDEN_MEAN, FrequencyVector


def fibonacci(n):
    out = [0, 1]
    while len(out) < n:
        out.append(out[-1] + out[-2])
    return out


def test_golden_denominators_are_fibonacci():
    cf = continued_fraction(GOLDEN_MEAN, 20)
    assert cf.quotients == (1,) * 20
    assert list(cf.denominators) == fibonacci(23)[1:22]
    assert list(cf.numerators) == fibonacci(22)[:21]


def test_double_precision_limit():
    assert continued_fraction(GOLDEN_MEAN, 37).depth == 37
    with pytest.raises(PrecisionExhaustedError):
        continued_fraction(GOLDEN_MEAN, 45)
    with mpmath.workdps(60):
        assert continued_fraction((mpmath.sqrt(5) - 1) / 2, 80).quotients == (1,) * 80


def test_rational_terminates():
    cf = continued_fraction(Fraction(13, 47), 10)
    assert cf.terminated
    assert cf.value == Fraction(13, 47)
    assert cf.quotients == (3, 1, 1, 1, 1, 2)


def test_known_expansions():
    assert continued_fraction(math.sqrt(2) - 1, 15).quotients == (2,) * 15
    assert continued_fraction(math.pi - 3, 4).quotients == (7, 15, 1, 292)
    assert continued_fraction(math.e - 2, 9).quotients == (1, 2, 1, 1, 4, 1, 1, 6, 1)


def test_convergents_are_best_approximations():
    cf = continued_fraction(math.pi - 3, 5)
    x = Fraction(math.pi - 3)
    for k in range(1, cf.depth + 1):
        q = cf.denominators[k]
        assert abs(x - cf.convergent(k)) < Fraction(1, q * q)


def test_input_range():
    with pytest.raises(ValueError):
        continued_fraction(1.5, 3)
    with pytest.raises(ValueError):
        ContinuedFraction.from_quotients([1, 0, 2])


def test_golden_beta_is_small():
    cf = continued_fraction(GOLDEN_MEAN, 20)
    assert beta_estimate(cf) < 0.1
    ratios = growth_ratios(cf)
    assert np.all(np.diff(ratios[1:]) < 0)


def test_liouville_construction_recovers_beta():
    qs = liouville_quotients(0.5, 10)
    cf = ContinuedFraction.from_quotients(qs)
    assert beta_estimate(cf) == pytest.approx(0.5, rel=1e-3)
    assert qs[:4] == [1, 1, 1, 1]
    # the spike quotients make q_{k+1} at least exp(beta q_k)
    for k in (4, 9):
        assert math.log(cf.denominators[k + 1]) >= 0.5 * cf.denominators[k]


def brute_dc_min(alpha, tau, k_max):
    # plain per-k loop, no vectorization or symmetry reduction
    best = math.inf
    for k in range(1, k_max + 1):
        t = k * alpha
        best = min(best, abs(t - round(t)) * k ** tau)
    return best


def test_dc_scan_golden():
    cert = diophantine_check(FrequencyVector.golden(), 0.27, 1.0, 1000)
    assert cert.verified
    assert cert.c_max == pytest.approx(brute_dc_min(GOLDEN_MEAN, 1.0, 1000), rel=1e-12)
    assert cert.worst_k == (1,)


def test_dc_scan_rational_fails():
    cert = diophantine_check(FrequencyVector((1 / 3,), rational_denominator=3), 0.01, 1.0, 50)
    assert not cert.verified
    assert cert.c_max == 0.0
    assert cert.worst_k == (3,)


def test_dc_scan_two_dimensions_matches_loop():
    alpha = FrequencyVector((GOLDEN_MEAN, math.sqrt(2) - 1))
    cert = diophantine_check(alpha, 0.01, 2.0, 12, chunk=37)
    best = math.inf
    for k1 in range(-12, 13):
        for k2 in range(-12, 13):
            if k1 == k2 == 0:
                continue
            t = k1 * alpha.alpha[0] + k2 * alpha.alpha[1]
            best = min(best, abs(t - round(t)) * max(abs(k1), abs(k2)) ** 2)
    assert cert.c_max == pytest.approx(best, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=12))
def test_quotients_round_trip(qs):
    cf = ContinuedFraction.from_quotients(qs)
    # value agrees with the nested fraction evaluated from the bottom
    x = Fraction(0)
    for a in reversed(qs):
        x = 1 / (a + x)
    assert cf.value == x
    # determinant identity p_{k-1} q_k - p_k q_{k-1} = (-1)^k
    for k in range(1, len(qs) + 1):
        assert cf.numerators[k - 1] * cf.denominators[k] - cf.numerators[k] * cf.denominators[k - 1] == (-1) ** k
    if qs[-1] > 1:
        assert continued_fraction(x, len(qs) + 3).quotients == tuple(qs)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6))
def test_float_expansion_stays_in_ulp_interval(a):
    try:
        cf = continued_fraction(a, 8)
    except PrecisionExhaustedError:
        return
    # the deepest convergent brackets a to within 1/q_K q_{K-1}
    q = cf.denominators
    assert abs(Fraction(a) - cf.value) <= Fraction(1, q[-1] * q[-2]) + Fraction(math.ulp(a))
