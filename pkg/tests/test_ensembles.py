import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from prodrand.ensembles import (
    EnsembleSpec,
    Family,
    SpectrumLaw,
    draw_batch,
    haar_orthogonal,
    haar_vectors,
    rotational_invariance_test,
    sample,
    sample_diagonal_bernoulli,
    sample_gaussian,
    sample_haar_orthogonal,
    sample_haar_vector,
    sample_rank_one,
    sample_rotated_spectrum,
)
from prodrand.errors import ParameterError, UsageError
from prodrand.rng import make_rng

EPS = np.finfo(float).eps


# -- construction ----------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [
        dict(family=Family.GAUSSIAN, n_dim=4, sigma=0.0),
        dict(family=Family.GAUSSIAN, n_dim=0),
        dict(family=Family.GAUSSIAN, n_dim=2.0),
        dict(family=Family.BERNOULLI, n_dim=2, bern_lo=2.0, bern_hi=1.0),
        dict(family=Family.BERNOULLI, n_dim=2, bern_lo=0.0, bern_hi=1.0),
        dict(family=Family.BERNOULLI, n_dim=2, prob_hi=1.5),
    ],
)
def test_spec_rejects_bad_parameters(kwargs):
    with pytest.raises(ParameterError):
        EnsembleSpec(**kwargs)


def test_spectrum_law_validation():
    with pytest.raises(ParameterError):
        SpectrumLaw("uniform", 2.0, 1.0)
    with pytest.raises(ParameterError):
        SpectrumLaw("point", 1.0, 2.0)
    with pytest.raises(ParameterError):
        SpectrumLaw("table", 1.0, 2.0, (1.5, 1.2))
    with pytest.raises(ParameterError):
        SpectrumLaw("cauchy", 1.0, 2.0)


def test_spec_config_roundtrip():
    specs = [
        EnsembleSpec.gaussian(5, 1.5),
        EnsembleSpec.rotated(3, 1.0, 2.0, "two_point"),
        EnsembleSpec(Family.ROTATED, 4, spectrum=SpectrumLaw("table", 1.0, 3.0, (1.0, 1.5, 3.0))),
        EnsembleSpec.bernoulli(4, 1.0, 2.0, 0.3),
        EnsembleSpec.rank_one(7),
    ]
    for s in specs:
        assert EnsembleSpec.from_config(s.to_config()) == s


def test_b_const():
    assert EnsembleSpec.rotated(3, 1.0, 2.0).b_const == pytest.approx(4.0)


def test_wrong_family_is_usage_error():
    with pytest.raises(UsageError):
        sample_gaussian(EnsembleSpec.rank_one(3), 0)
    with pytest.raises(UsageError):
        sample_rotated_spectrum(EnsembleSpec.gaussian(3), 0)
    with pytest.raises(UsageError):
        sample_diagonal_bernoulli(EnsembleSpec.gaussian(3), 0)


def test_determinism():
    for spec in [EnsembleSpec.gaussian(6), EnsembleSpec.rotated(6, 1, 2), EnsembleSpec.rank_one(6)]:
        np.testing.assert_array_equal(sample(spec, 99).entries, sample(spec, 99).entries)
        assert not np.array_equal(sample(spec, 99).entries, sample(spec, 100).entries)


# -- Gaussian --------------------------------------------------------------

@pytest.mark.slow
def test_gaussian_scalar_variance_over_seeds():
    spec = EnsembleSpec.gaussian(1)
    x = np.array([sample_gaussian(spec, s).entries[0, 0] for s in range(10**6)])
    assert 0.99 <= x.var() <= 1.01


def test_gaussian_trace_mean():
    rng = make_rng(11)
    s_bar = np.concatenate([draw_batch(EnsembleSpec.gaussian(16, 2.0), 10**4, rng).s_bar for _ in range(10)])
    assert 3.98 <= s_bar.mean() <= 4.02
    se = 4.0 * np.sqrt(2 / (16**2 * s_bar.size))
    assert abs(s_bar.mean() - 4.0) < 4 * se


def test_gaussian_entry_law():
    m = draw_batch(EnsembleSpec.gaussian(8, 3.0), 2000, make_rng(2)).mats.ravel()
    assert stats.kstest(m / (3.0 / np.sqrt(8)), "norm").pvalue > 1e-3


# -- Haar vectors and matrices --------------------------------------------

def test_haar_vector_unit_norm():
    for N in (1, 2, 7, 50):
        for s in range(20):
            assert abs(np.linalg.norm(sample_haar_vector(N, s)) - 1) <= 8 * EPS
    with pytest.raises(ParameterError):
        sample_haar_vector(0, 1)


def test_haar_vector_dim_one_signs():
    v = np.array([sample_haar_vector(1, s)[0] for s in range(10**5)])
    assert set(np.unique(v)) == {-1.0, 1.0}
    assert abs((v > 0).mean() - 0.5) <= 0.01


def test_haar_vector_first_coordinate_mean():
    u = haar_vectors(8, 10**6, make_rng(5))
    assert abs((u[:, 0] ** 2).mean() - 1 / 8) <= 0.002


@pytest.mark.parametrize("N", [2, 3, 4, 16])
def test_haar_vector_beta_marginal(N):
    u = haar_vectors(N, 10**6, make_rng(6, N))
    assert stats.kstest(u[:, 0] ** 2, stats.beta(0.5, (N - 1) / 2).cdf).pvalue > 1e-3


def test_haar_orthogonal_dim_one_signs():
    v = np.array([sample_haar_orthogonal(1, s)[0, 0] for s in range(10**5)])
    assert set(np.unique(v)) == {-1.0, 1.0}
    assert abs((v > 0).mean() - 0.5) <= 0.01


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 40), seed=st.integers(0, 2**64 - 1))
def test_haar_orthogonal_is_orthogonal(N, seed):
    u = sample_haar_orthogonal(N, seed)
    assert np.abs(u.T @ u - np.eye(N)).max() < 64 * EPS


def test_haar_orthogonal_column_law_matches_haar_vector():
    rng = make_rng(7)
    col = haar_orthogonal(4, 2 * 10**5, rng)[:, :, 0]
    vec = haar_vectors(4, 2 * 10**5, rng)
    assert stats.ks_2samp(col[:, 0] ** 2, vec[:, 0] ** 2).pvalue > 1e-3


def test_haar_orthogonal_left_invariance():
    rng = make_rng(8)
    q = sample_haar_orthogonal(5, 1234)
    u = haar_orthogonal(5, 10**5, rng)
    a = u[:, 0, 0]
    b = (q @ u)[:, 0, 0]
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_unsigned_qr_is_not_haar():
    # the sign correction matters: raw LAPACK QR has a biased R diagonal
    g = make_rng(9).standard_normal((10**5, 3, 3))
    q, _ = np.linalg.qr(g)
    ok = haar_orthogonal(3, 10**5, make_rng(10))
    assert stats.ks_2samp(q[:, 0, 0], ok[:, 0, 0]).pvalue < 1e-3


# -- RotatedSpectrum -------------------------------------------------------

def test_point_mass_gives_orthogonal():
    m = sample_rotated_spectrum(EnsembleSpec.point_mass(6, 1.0), 3)
    np.testing.assert_allclose(m.entries.T @ m.entries, np.eye(6), atol=64 * EPS)
    assert m.spectrum_summary.s_bar == pytest.approx(1.0)
    assert m.spectrum_summary.s_max == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(
    N=st.integers(1, 12),
    lo=st.floats(0.1, 3.0),
    ratio=st.floats(1.0, 5.0),
    kind=st.sampled_from(["uniform", "two_point"]),
    seed=st.integers(0, 2**32),
)
def test_bounded_singular_value_certificate(N, lo, ratio, kind, seed):
    spec = EnsembleSpec.rotated(N, lo, lo * ratio, kind)
    m = sample_rotated_spectrum(spec, seed)
    s = m.spectrum_summary
    assert s.s_max <= spec.b_const * s.s_bar * (1 + 64 * EPS)
    sv2 = np.linalg.svd(m.entries, compute_uv=False) ** 2
    np.testing.assert_allclose(sv2.max(), s.s_max, rtol=1e-10)
    np.testing.assert_allclose(sv2.mean(), s.s_bar, rtol=1e-10)


def test_uniform_spectrum_second_moment():
    b = draw_batch(EnsembleSpec.rotated(4, 1.0, 2.0), 10**5, make_rng(12))
    assert abs(b.s_bar.mean() - 7 / 3) <= 0.01


def test_table_spectrum_interpolates_quantiles():
    law = SpectrumLaw("table", 1.0, 3.0, (1.0, 3.0))
    d = law.sample(make_rng(13), 10**5)
    assert stats.kstest(d, stats.uniform(1.0, 2.0).cdf).pvalue > 1e-3


# -- RankOne ---------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 60), seed=st.integers(0, 2**32))
def test_rank_one_structure(N, seed):
    m = sample_rank_one(N, seed)
    x = m.entries
    assert np.linalg.matrix_rank(x) == 1
    assert abs(np.linalg.norm(x, 2) ** 2 - N) <= 32 * EPS * N
    assert abs(np.trace(x.T @ x) - N) <= 32 * EPS * N
    assert m.spectrum_summary.s_bar == pytest.approx(1.0, abs=32 * EPS)
    assert m.spectrum_summary.s_max == pytest.approx(N, rel=32 * EPS)


def test_rank_one_action_mean():
    mats = draw_batch(EnsembleSpec.rank_one(16), 10**5, make_rng(14)).mats
    v = np.ones(16) / 4.0
    assert abs((np.linalg.norm(mats @ v, axis=1) ** 2).mean() - 1) <= 0.02


# -- DiagonalBernoulli -----------------------------------------------------

def test_bernoulli_p_one_is_scalar():
    m = sample_diagonal_bernoulli(EnsembleSpec.bernoulli(5, 1.0, 3.0, 1.0), 0)
    np.testing.assert_array_equal(m.entries, 3.0 * np.eye(5))


def test_bernoulli_fraction_high():
    b = draw_batch(EnsembleSpec.bernoulli(8, 1.0, 2.0, 0.5), 10**5, make_rng(15))
    d = np.diagonal(b.mats, axis1=1, axis2=2)
    assert abs((d == 2.0).mean() - 0.5) <= 0.01
    off = b.mats.copy()
    off[:, np.arange(8), np.arange(8)] = 0
    assert not off.any()


def test_bernoulli_counts_binomial():
    N, p, T = 6, 0.3, 10**5
    b = draw_batch(EnsembleSpec.bernoulli(N, 1.0, 2.0, p), T, make_rng(16))
    counts = np.bincount(b.aux["hi"].sum(axis=1), minlength=N + 1)
    expected = stats.binom(N, p).pmf(np.arange(N + 1)) * T
    assert stats.chisquare(counts, expected).pvalue > 1e-3


# -- rotational invariance -------------------------------------------------

def test_invariance_gaussian_passes():
    assert rotational_invariance_test(EnsembleSpec.gaussian(8), 10**5, 1).passed


def test_invariance_point_mass_passes():
    for N in (1, 3, 6):
        assert rotational_invariance_test(EnsembleSpec.point_mass(N, 1.0), 1000, 2).passed


def test_invariance_bernoulli_fails():
    spec = EnsembleSpec.bernoulli(2, 1.0, 4.0, 0.5)
    rep = rotational_invariance_test(spec, 10**5, 3, v=np.array([1.0, 1.0]) / np.sqrt(2))
    assert not rep.passed


def test_invariance_needs_trials():
    with pytest.raises(ParameterError):
        rotational_invariance_test(EnsembleSpec.gaussian(2), 50, 0)
