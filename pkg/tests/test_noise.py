import math

import numpy as np
import pytest
from scipy import stats

from helpers import (
    chisq_gof_pvalue,
    chisq_two_sample_pvalue,
    integer_bin_counts,
    symmetric_tail_probs,
    upper_tail_probs,
)

from dpbandit.errors import InvalidParams
from dpbandit.noise import (
    DiscreteGaussianParams,
    DiscreteLaplaceParams,
    PolyaParams,
    SkellamParams,
    _skellam_tail_radius_raw,
    discrete_laplace_tail,
    sample_discrete_gaussian,
    sample_discrete_laplace,
    sample_polya,
    sample_skellam,
    skellam_tail_radius,
)
from dpbandit.rng import RngStream

N_BIG = 1_000_000


# --- Pólya ---------------------------------------------------------------


def test_polya_beta_zero_is_point_mass_at_zero():
    draws = sample_polya(PolyaParams(1.0, 0.0), RngStream(1), size=1000)
    assert np.all(draws == 0)


def test_polya_mean_matches_geometric_series():
    beta = math.exp(-1.0)
    draws = sample_polya(PolyaParams(1.0, beta), RngStream(2), size=N_BIG)
    want = beta / (1.0 - beta)  # r * beta/(1-beta) with r = 1
    assert abs(draws.mean() - want) / want < 0.01


def test_polya_pmf_chi_square_r_half_beta_half():
    r, beta = 0.5, 0.5
    draws = sample_polya(PolyaParams(r, beta), RngStream(3), size=N_BIG)
    # independent oracle: negative binomial with success prob 1 - beta
    ks = np.arange(0, 13)
    probs = upper_tail_probs(stats.nbinom.pmf(ks, r, 1.0 - beta))
    assert chisq_gof_pvalue(draws, probs, 0, 12) > 0.01


def test_polya_invalid_params():
    with pytest.raises(InvalidParams):
        PolyaParams(0.0, 0.5)
    with pytest.raises(InvalidParams):
        PolyaParams(-1.0, 0.5)
    with pytest.raises(InvalidParams):
        PolyaParams(1.0, 1.0)
    with pytest.raises(InvalidParams):
        PolyaParams(1.0, -0.1)


# --- discrete Laplace ----------------------------------------------------


def test_discrete_laplace_symmetric_mean():
    draws = sample_discrete_laplace(DiscreteLaplaceParams(1.0), RngStream(4), size=N_BIG)
    se = draws.std() / math.sqrt(N_BIG)
    assert abs(draws.mean()) <= 3 * se


def test_discrete_laplace_mass_at_zero():
    draws = sample_discrete_laplace(DiscreteLaplaceParams(1.0), RngStream(5), size=N_BIG)
    want = (math.e - 1.0) / (math.e + 1.0)
    assert abs(np.mean(draws == 0) - want) < 0.003


def test_discrete_laplace_pmf_chi_square_b2():
    draws = sample_discrete_laplace(DiscreteLaplaceParams(2.0), RngStream(6), size=N_BIG)
    ks = np.arange(-10, 11)
    # independent oracle: scipy's discrete Laplace with a = 1/b
    probs = symmetric_tail_probs(stats.dlaplace.pmf(ks, 0.5))
    assert chisq_gof_pvalue(draws, probs, -10, 10) > 0.01


def test_discrete_laplace_invalid_scale():
    with pytest.raises(InvalidParams):
        DiscreteLaplaceParams(0.0)
    with pytest.raises(InvalidParams):
        DiscreteLaplaceParams(-2.0)


# --- Skellam ---------------------------------------------------------------


def test_skellam_zero_mean():
    draws = sample_skellam(SkellamParams(4.0), RngStream(7), size=N_BIG)
    se = draws.std() / math.sqrt(N_BIG)
    assert abs(draws.mean()) <= 3 * se


def test_skellam_variance():
    draws = sample_skellam(SkellamParams(4.0), RngStream(8), size=N_BIG)
    assert abs(draws.var() - 4.0) / 4.0 < 0.02


def test_skellam_closed_under_summation():
    rng = RngStream(9)
    one = sample_skellam(SkellamParams(1.0), rng.split("a"), size=N_BIG)
    two = sample_skellam(SkellamParams(1.0), rng.split("b"), size=N_BIG)
    direct = sample_skellam(SkellamParams(2.0), rng.split("c"), size=N_BIG)
    assert chisq_two_sample_pvalue(one + two, direct) > 0.01


def test_skellam_mgf_bound():
    # E[e^{lambda X}] <= e^{lambda^2 sigma^2} for |lambda| <= sqrt(2), checked
    # against the empirical moment with a 5-standard-error allowance
    rng = RngStream(10)
    for sigma2 in (1.0, 4.0):
        draws = sample_skellam(SkellamParams(sigma2), rng.split(f"s{sigma2}"), size=N_BIG)
        for lam in (0.25, 0.5, 1.0, 1.4):
            vals = np.exp(lam * draws)
            est = vals.mean()
            se = vals.std() / math.sqrt(N_BIG)
            assert est <= math.exp(lam * lam * sigma2) + 5 * se, (sigma2, lam)


def test_skellam_invalid_variance():
    with pytest.raises(InvalidParams):
        SkellamParams(0.0)


# --- discrete Gaussian -------------------------------------------------------


def test_discrete_gaussian_symmetry():
    draws = sample_discrete_gaussian(DiscreteGaussianParams(2.0), RngStream(11), size=N_BIG)
    for k in (1, 2, 3):
        p_plus = np.mean(draws == k)
        p_minus = np.mean(draws == -k)
        assert abs(p_plus - p_minus) < 0.005


def test_discrete_gaussian_pmf_chi_square():
    draws = sample_discrete_gaussian(DiscreteGaussianParams(1.0), RngStream(12), size=N_BIG)
    ks = np.arange(-8, 9)
    weights = np.exp(-(ks.astype(float) ** 2) / 2.0)
    probs = symmetric_tail_probs(weights / weights.sum())
    assert chisq_gof_pvalue(draws, probs, -8, 8) > 0.01


def test_discrete_gaussian_sub_gaussian_tail():
    sigma2 = 2.0
    draws = sample_discrete_gaussian(DiscreteGaussianParams(sigma2), RngStream(13), size=N_BIG)
    for t in (2, 4, 6):
        assert np.mean(np.abs(draws) >= t) <= 2.0 * math.exp(-t * t / (2.0 * sigma2))


def test_discrete_gaussian_invalid_scale():
    with pytest.raises(InvalidParams):
        DiscreteGaussianParams(-1.0)


# --- tail formulas ---------------------------------------------------------


def test_discrete_laplace_tail_closed_form_at_zero():
    assert abs(discrete_laplace_tail(1.0, 0) - 1.0 / (math.e + 1.0)) < 1e-12


def test_discrete_laplace_tail_monotone_and_vanishing():
    vals = [discrete_laplace_tail(1.0, m) for m in range(0, 200, 5)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert discrete_laplace_tail(1.0, 1000) < 1e-12
    # nondecreasing in the scale
    scales = [0.5, 1.0, 2.0, 4.0]
    tails = [discrete_laplace_tail(b, 3) for b in scales]
    assert all(a <= b for a, b in zip(tails, tails[1:]))


def test_discrete_laplace_tail_monte_carlo():
    draws = sample_discrete_laplace(DiscreteLaplaceParams(2.0), RngStream(14), size=N_BIG)
    want = discrete_laplace_tail(2.0, 3)
    assert abs(np.mean(draws > 3) - want) < 0.003


def test_discrete_laplace_tail_invalid():
    with pytest.raises(InvalidParams):
        discrete_laplace_tail(0.0, 1)
    with pytest.raises(InvalidParams):
        discrete_laplace_tail(1.0, -1)


def test_skellam_tail_radius_degenerate_algebra():
    # log(2/p) vanishes at p = 2: raw formula (validation bypassed) gives 0
    assert _skellam_tail_radius_raw(1.0, 2.0) == 0.0
    with pytest.raises(InvalidParams):
        skellam_tail_radius(1.0, 2.0)


def test_skellam_tail_radius_value():
    log_term = math.log(200.0)
    want = 2.0 * 2.0 * math.sqrt(log_term) + math.sqrt(2.0) * log_term
    assert abs(skellam_tail_radius(2.0, 0.01) - want) < 1e-12
    assert abs(want - 16.702) < 2e-3


def test_skellam_tail_radius_monotonicity():
    assert skellam_tail_radius(1.0, 0.01) < skellam_tail_radius(2.0, 0.01)
    assert skellam_tail_radius(2.0, 0.001) > skellam_tail_radius(2.0, 0.01)


def test_skellam_tail_radius_empirical_coverage():
    draws = sample_skellam(SkellamParams(4.0), RngStream(15), size=N_BIG)
    radius = skellam_tail_radius(2.0, 0.01)
    assert np.mean(np.abs(draws) > radius) <= 0.01


# --- determinism -------------------------------------------------------------


def test_samplers_replay_identically():
    for draw in (
        lambda r: sample_polya(PolyaParams(0.5, 0.7), r, size=64),
        lambda r: sample_discrete_laplace(DiscreteLaplaceParams(1.5), r, size=64),
        lambda r: sample_skellam(SkellamParams(3.0), r, size=64),
        lambda r: sample_discrete_gaussian(DiscreteGaussianParams(2.5), r, size=64),
    ):
        a = draw(RngStream(77, path=(1,)))
        b = draw(RngStream(77, path=(1,)))
        assert np.array_equal(a, b)


def test_scalar_draws_are_python_ints():
    assert isinstance(sample_polya(PolyaParams(1.0, 0.5), RngStream(16)), int)
    assert isinstance(sample_discrete_laplace(DiscreteLaplaceParams(1.0), RngStream(16)), int)
    assert isinstance(sample_skellam(SkellamParams(1.0), RngStream(16)), int)
    assert isinstance(sample_discrete_gaussian(DiscreteGaussianParams(1.0), RngStream(16)), int)


def test_integer_bin_counts_helper():
    counts = integer_bin_counts(np.array([-20, -2, 0, 0, 3, 99]), -2, 3)
    assert counts.tolist() == [1, 1, 0, 2, 0, 0, 1, 1]
