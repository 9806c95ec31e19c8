import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from prodrand.errors import ParameterError
from prodrand.stats import clopper_pearson_upper, mann_kendall, trials_to_resolve, zero_hit_upper


def _cp_bisect(h, T, conf=0.99):
    # upper limit solves P(Bin(T, p) <= h) = 1 - conf; the cdf decreases in p
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if stats.binom.cdf(h, T, mid) > 1 - conf:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@settings(max_examples=60, deadline=None)
@given(T=st.integers(1, 5000), frac=st.floats(0, 0.999))
def test_clopper_pearson_matches_bisection(T, frac):
    h = min(int(frac * T), T - 1)
    assert clopper_pearson_upper(h, T) == pytest.approx(_cp_bisect(h, T), abs=1e-9)


def test_clopper_pearson_edges():
    assert clopper_pearson_upper(5, 5) == 1.0
    assert clopper_pearson_upper(0, 1000) == pytest.approx(zero_hit_upper(1000), rel=1e-10)
    assert zero_hit_upper(1000) == pytest.approx(1 - 0.01 ** (1 / 1000))
    for bad in [(-1, 5), (6, 5), (0, 0)]:
        with pytest.raises(ParameterError):
            clopper_pearson_upper(*bad)
    with pytest.raises(ParameterError):
        clopper_pearson_upper(1, 5, confidence=1.0)


def test_clopper_pearson_monotone():
    vals = [clopper_pearson_upper(h, 200) for h in range(201)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("bound", [0.5, 1e-2, 1e-4, 3.7e-6])
def test_trials_to_resolve(bound):
    T = trials_to_resolve(bound)
    assert zero_hit_upper(T) <= bound < zero_hit_upper(T - 1)


def test_mann_kendall_exact_oracle():
    x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0]
    res = mann_kendall(x)
    n = len(x)
    s_of = lambda v: sum(np.sign(v[j] - v[i]) for i in range(n) for j in range(i + 1, n))
    null = [s_of([x[k] for k in p]) for p in itertools.permutations(range(n))]
    assert res.s == s_of(x)
    assert res.p_increasing == pytest.approx(np.mean(np.array(null) >= res.s))


def test_mann_kendall_four_points_floor():
    assert mann_kendall([1, 2, 3, 4]).p_increasing == pytest.approx(1 / 24)
    assert mann_kendall([4, 3, 2, 1]).p_increasing == 1.0


def test_mann_kendall_s_is_kendall_tau_numerator():
    rng = np.random.default_rng(0)
    for n in (9, 20, 50):
        x = rng.standard_normal(n)
        tau = stats.kendalltau(np.arange(n), x).statistic
        assert mann_kendall(x).s == pytest.approx(tau * n * (n - 1) / 2)


def test_mann_kendall_detects_trend():
    rng = np.random.default_rng(1)
    up = np.arange(30) + rng.standard_normal(30)
    assert mann_kendall(up).p_increasing < 1e-6
    assert mann_kendall(-up).p_increasing > 0.99
    assert mann_kendall([2.0] * 12).p_increasing == 1.0


def test_mann_kendall_null_calibration():
    rng = np.random.default_rng(2)
    ps = np.array([mann_kendall(rng.standard_normal(15)).p_increasing for _ in range(2000)])
    assert abs((ps < 0.05).mean() - 0.05) < 0.02


def test_mann_kendall_validation():
    with pytest.raises(ParameterError):
        mann_kendall([1.0])
    with pytest.raises(ParameterError):
        mann_kendall([1.0, math.nan])
