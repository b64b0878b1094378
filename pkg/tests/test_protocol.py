import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from helpers import chisq_two_sample_pvalue, symmetric_tail_probs, chisq_gof_pvalue

from dpbandit.errors import InvalidParams, UnsupportedCombination
from dpbandit.noise import DiscreteLaplaceParams, SkellamParams, sample_discrete_laplace, sample_skellam
from dpbandit.protocol import (
    AggregateView,
    Mechanism,
    ProtocolParams,
    RelaxedAgg,
    TrustModel,
    _sample_noise,
    analyze,
    audit_llr,
    derive_protocol_params,
    encode_reward,
    end_to_end_batch_sum,
    llr_distance,
    randomize,
    relaxed_secagg,
    secagg,
)
from dpbandit.rng import RngStream

DIST = TrustModel.DISTRIBUTED
POLYA = Mechanism.DISCRETE_LAPLACE_POLYA


def make_params(n, g, tau, trust=DIST, epsilon=1.0, s=1.0, p=0.1, relaxed=None):
    return ProtocolParams(
        trust=trust,
        mechanism=POLYA,
        epsilon=epsilon,
        s=s,
        n=n,
        g=g,
        tau=tau,
        m=n * g + 2 * tau + 1,
        p=p,
        relaxed=relaxed,
    )


# --- parameter derivation ----------------------------------------------------


def test_derive_pure_dp_example():
    p = derive_protocol_params(DIST, POLYA, 0.5, n=16, p=0.01)
    assert (p.g, p.tau, p.m) == (2, 22, 77)


def test_derive_skellam_degenerate_clamping():
    p = derive_protocol_params(DIST, Mechanism.SKELLAM, 1.0, s=1.0, n=1, p=2.0)
    assert (p.g, p.tau, p.m) == (1, 1, 4)


def test_derive_discrete_gaussian_example():
    p = derive_protocol_params(DIST, Mechanism.DISCRETE_GAUSSIAN, 1.0, s=2.0, n=4, p=0.5)
    assert (p.g, p.tau, p.m) == (4, 7, 31)


def test_derive_local_matches_formula():
    eps, n, p_fail, c = 0.5, 4, 0.1, 2.0
    params = derive_protocol_params(TrustModel.LOCAL, POLYA, eps, n=n, p=p_fail)
    g = math.ceil(eps * math.sqrt(n))
    tau = math.ceil((c * g / eps) * math.sqrt(2 * n * math.log(2 / p_fail)))
    assert (params.g, params.tau, params.m) == (g, tau, n * g + 2 * tau + 1)


def test_derive_relaxed_splits_budget():
    params = derive_protocol_params(DIST, POLYA, 1.0, n=16, p=0.05, relaxed=True)
    assert params.epsilon == 0.5  # noise runs at eps/2
    assert params.relaxed == RelaxedAgg(eps_hat=0.25, q_hat=0.05)
    # g and tau follow the halved budget
    assert params.g == math.ceil(0.5 * 4)
    assert params.tau == math.ceil((params.g / 0.5) * math.log(2 / 0.05))


def test_derive_unsupported_combinations():
    with pytest.raises(UnsupportedCombination):
        derive_protocol_params(TrustModel.CENTRAL, Mechanism.SKELLAM, 1.0, n=4)
    with pytest.raises(UnsupportedCombination):
        derive_protocol_params(TrustModel.LOCAL, Mechanism.DISCRETE_GAUSSIAN, 1.0, n=4)
    with pytest.raises(UnsupportedCombination):
        derive_protocol_params(DIST, Mechanism.CONTINUOUS_LAPLACE_CENTRAL, 1.0, n=4)
    with pytest.raises(UnsupportedCombination):
        derive_protocol_params(DIST, Mechanism.SKELLAM, 1.0, n=4, relaxed=True)


def test_derive_invalid_params():
    with pytest.raises(InvalidParams):
        derive_protocol_params(DIST, POLYA, 0.0, n=4)
    with pytest.raises(InvalidParams):
        derive_protocol_params(DIST, POLYA, 1.0, n=0)
    with pytest.raises(InvalidParams):
        derive_protocol_params(DIST, POLYA, 1.0, n=4, p=2.5)
    with pytest.raises(InvalidParams):
        derive_protocol_params(DIST, Mechanism.SKELLAM, 1.0, s=0.5, n=4)


@given(
    n=st.integers(1, 64),
    eps=st.floats(0.05, 4.0),
    p=st.floats(1e-4, 1.0),
    mech=st.sampled_from([POLYA, Mechanism.SKELLAM, Mechanism.DISCRETE_GAUSSIAN]),
)
@settings(max_examples=60, deadline=None)
def test_derive_modulus_invariant(n, eps, p, mech):
    params = derive_protocol_params(DIST, mech, eps, s=2.0, n=n, p=p)
    assert params.m == params.n * params.g + 2 * params.tau + 1
    assert params.g >= 1 and params.tau >= 1


def test_params_kv_roundtrip():
    p = derive_protocol_params(DIST, POLYA, 0.5, n=16, p=0.01, relaxed=True)
    assert ProtocolParams.from_kv(p.to_kv()) == p


def test_params_validation():
    with pytest.raises(InvalidParams):
        make_params(2, 4, 3).__class__(  # wrong modulus
            trust=DIST, mechanism=POLYA, epsilon=1.0, s=1.0, n=2, g=4, tau=3, m=20, p=0.1
        )


# --- encoding ---------------------------------------------------------------


def test_encode_endpoints_deterministic():
    rng = RngStream(1)
    assert all(encode_reward(0.0, 10, rng) == 0 for _ in range(50))
    assert all(encode_reward(0.5, 10, rng) == 5 for _ in range(50))
    assert all(encode_reward(1.0, 10, rng) == 10 for _ in range(50))


def test_encode_randomized_rounding_mean():
    draws = encode_reward(np.full(1_000_000, 0.37), 10, RngStream(2))
    assert set(np.unique(draws)) <= {3, 4}
    assert abs(draws.mean() - 3.7) < 0.005


def test_encode_rejects_out_of_range():
    with pytest.raises(InvalidParams):
        encode_reward(1.2, 10, RngStream(3))
    with pytest.raises(InvalidParams):
        encode_reward(-0.1, 10, RngStream(3))
    with pytest.raises(InvalidParams):
        encode_reward(0.5, 0, RngStream(3))


@given(x=st.floats(0.0, 1.0), g=st.integers(1, 64))
@settings(max_examples=80, deadline=None)
def test_encode_output_in_range(x, g):
    val = encode_reward(x, g, RngStream(4))
    assert 0 <= val <= g


# --- randomizer ---------------------------------------------------------------


def test_randomize_central_is_plain_encoding():
    params = make_params(3, 4, 3, trust=TrustModel.CENTRAL)
    rng = RngStream(5)
    for _ in range(20):
        assert randomize(1.0, params, rng) == 4


def test_randomize_outputs_stay_in_range():
    params = derive_protocol_params(DIST, POLYA, 1.0, n=8, p=0.1)
    rng = RngStream(6)
    xs = (np.arange(1_000_000) % 2).astype(float)  # adversarial endpoints
    for chunk in np.array_split(xs, 8):
        ys = randomize(chunk, params, rng)
        assert ys.min() >= 0 and ys.max() < params.m


def test_distributed_noise_sums_to_discrete_laplace():
    # the n-user noise total must follow Lap_Z(g/eps)
    params = derive_protocol_params(DIST, POLYA, 1.0, n=8, p=0.1)
    rng = RngStream(7)
    trials = 200_000
    noise = _sample_noise(params, rng, trials * params.n).reshape(trials, params.n)
    totals = noise.sum(axis=1)
    direct = sample_discrete_laplace(
        DiscreteLaplaceParams(params.g / params.epsilon), rng.split("direct"), size=trials
    )
    assert chisq_two_sample_pvalue(totals, direct) > 0.01


def test_skellam_noise_total_closed_under_summation():
    params = derive_protocol_params(DIST, Mechanism.SKELLAM, 1.0, s=1.0, n=16, p=0.1)
    rng = RngStream(8)
    trials = 200_000
    noise = _sample_noise(params, rng, trials * params.n).reshape(trials, params.n)
    totals = noise.sum(axis=1)
    sigma2 = params.g**2 / params.epsilon**2
    direct = sample_skellam(SkellamParams(sigma2), rng.split("direct"), size=trials)
    lim = int(3 * math.sqrt(sigma2))
    assert chisq_two_sample_pvalue(totals, direct, lo=-lim, hi=lim) > 0.01


# --- aggregation ----------------------------------------------------------------


def test_secagg_examples():
    assert secagg([], 7).value == 0
    assert secagg([3, 5, 6], 7).value == 0
    assert not secagg([3, 5, 6], 7).corrupted


def test_secagg_rejects_out_of_range():
    with pytest.raises(InvalidParams):
        secagg([7], 7)
    with pytest.raises(InvalidParams):
        secagg([-1], 7)


@given(a=st.integers(-(10**9), 10**9), b=st.integers(-(10**9), 10**9), m=st.integers(2, 10**6))
@settings(max_examples=200, deadline=None)
def test_secagg_distributive_property(a, b, m):
    assert secagg([a % m, b % m], m).value == (a + b) % m


def test_relaxed_secagg_disabled_matches_exact():
    rng = RngStream(9)
    gen = rng.generator
    for _ in range(1000):
        m = int(gen.integers(2, 50))
        msgs = gen.integers(0, m, size=5)
        assert relaxed_secagg(msgs, m, 0.25, 0.0, rng).value == secagg(msgs, m).value


def test_relaxed_secagg_corruption_frequency():
    rng = RngStream(10)
    flags = [relaxed_secagg([1, 2], 9, 0.25, 0.1, rng).corrupted for _ in range(100_000)]
    assert abs(np.mean(flags) - 0.1) < 0.005


def test_relaxed_secagg_analyzer_failure_bound():
    # failure of |A(y) - sum x_hat / g| <= tau/g happens w.p. at most q_hat + p
    p_fail = 0.05
    params = derive_protocol_params(DIST, POLYA, 1.0, n=8, p=p_fail, relaxed=True)
    rng = RngStream(11)
    rewards = np.zeros(params.n)  # x * g integral: rounding is exact
    trials = 100_000
    bad = 0
    for i in range(trials):
        z = end_to_end_batch_sum(rewards, params, rng.split("t", i))
        bad += abs(z) > params.tau / params.g
    bound = params.relaxed.q_hat + p_fail
    se = math.sqrt(bound * (1 - bound) / trials)
    assert bad / trials <= bound + 3 * se


# --- analyzer -------------------------------------------------------------------


def test_analyze_plain_branch():
    params = make_params(2, 4, 3)  # m = 15
    assert analyze(AggregateView(7, 15), params) == pytest.approx(1.75)


def test_analyze_underflow_branch():
    params = make_params(2, 4, 3)
    # noisy sum -2 wraps to 13 > n*g + tau = 11, so z = (13 - 15)/4
    assert analyze(AggregateView(13, 15), params) == -0.5


def test_analyze_rejects_modulus_mismatch():
    params = make_params(2, 4, 3)
    with pytest.raises(InvalidParams):
        analyze(AggregateView(1, 16), params)


def test_analyze_central_requires_rng():
    params = make_params(2, 4, 3, trust=TrustModel.CENTRAL)
    with pytest.raises(InvalidParams):
        analyze(AggregateView(7, 15), params)
    assert isinstance(analyze(AggregateView(7, 15), params, RngStream(12)), float)


def test_underflow_correction_exact_exhaustive():
    for n in range(1, 5):
        for g in range(1, 5):
            for tau in range(1, 5):
                params = make_params(n, g, tau)
                m = params.m
                for v in range(-tau, n * g + tau + 1):
                    got = analyze(AggregateView(v % m, m), params)
                    assert got == v / g, (n, g, tau, v)


def test_noiseless_round_trip_recovers_exact_sum():
    params = make_params(4, 4, 2)
    xs = np.array([0.0, 0.25, 0.5, 1.0])  # x * g all integral
    ys = randomize(xs, params, RngStream(13), zero_noise=True)
    z = analyze(secagg(ys, params.m), params)
    assert z == xs.sum()


def test_modular_simulation_equivalence():
    # secagg(randomize(...)) replays as (sum x_hat + sum eta) mod m on the
    # same stream
    params = derive_protocol_params(DIST, POLYA, 0.5, n=16, p=0.1)
    xs = RngStream(14).generator.random(params.n)
    view = secagg(randomize(xs, params, RngStream(15, path=(3,))), params.m)

    replay = RngStream(15, path=(3,))
    encoded = encode_reward(xs, params.g, replay)
    eta = _sample_noise(params, replay, params.n)
    assert view.value == int((encoded + eta).sum()) % params.m


# --- end to end -----------------------------------------------------------------


@pytest.mark.parametrize(
    "trust,mech,s",
    [
        (DIST, POLYA, 1.0),
        (DIST, Mechanism.SKELLAM, 2.0),
        (DIST, Mechanism.DISCRETE_GAUSSIAN, 2.0),
        (TrustModel.LOCAL, POLYA, 1.0),
        (TrustModel.CENTRAL, POLYA, 1.0),
    ],
)
def test_end_to_end_zero_rewards_accuracy(trust, mech, s):
    p_fail = 0.05
    params = derive_protocol_params(trust, mech, 1.0, s=s, n=16, p=p_fail)
    rng = RngStream(16)
    trials = 4000
    bad = 0
    for i in range(trials):
        z = end_to_end_batch_sum(np.zeros(16), params, rng.split(mech.value, i))
        bad += abs(z) > params.tau / params.g
    # noise tail alone is calibrated to p; 2p covers rounding too
    se = math.sqrt(2 * p_fail * (1 - 2 * p_fail) / trials)
    assert bad / trials <= 2 * p_fail + 3 * se


def test_end_to_end_error_decomposition_bound():
    p_fail = 0.01
    params = derive_protocol_params(DIST, POLYA, 1.0, n=64, p=p_fail)
    rng = RngStream(17)
    rounding_bound = math.sqrt(2.0 * params.n / params.g**2 * math.log(2.0 / p_fail))
    bound = rounding_bound + params.tau / params.g
    trials = 10_000
    ok = 0
    for i in range(trials):
        xs = rng.split("x", i).generator.random(params.n)
        z = end_to_end_batch_sum(xs, params, rng.split("run", i))
        ok += abs(z - xs.sum()) <= bound
    assert ok / trials >= 0.99


def test_end_to_end_central_zero_noise_exact():
    params = make_params(4, 4, 2, trust=TrustModel.CENTRAL)
    xs = np.array([0.25, 0.5, 0.75, 1.0])
    z = end_to_end_batch_sum(xs, params, RngStream(18), zero_noise=True)
    assert z == xs.sum()


def test_end_to_end_requires_full_batch():
    params = make_params(4, 4, 2)
    with pytest.raises(InvalidParams):
        end_to_end_batch_sum(np.zeros(3), params, RngStream(19))


# --- audit ------------------------------------------------------------------------


def test_audit_llr_single_user_unit_budget():
    params = derive_protocol_params(DIST, POLYA, 1.0, n=1, p=0.1)
    assert params.g == 1
    assert audit_llr(params) <= 1.0 + 1e-9


def test_audit_llr_two_users_half_budget():
    params = derive_protocol_params(DIST, POLYA, 0.5, n=2, p=0.1)
    assert params.g == 1
    assert audit_llr(params) <= 0.5 + 1e-9


def test_audit_llr_is_sharp():
    params = derive_protocol_params(DIST, POLYA, 1.0, n=2, p=0.1)
    value = audit_llr(params)
    assert params.epsilon - 1e-6 <= value <= params.epsilon + 1e-9


def test_audit_zero_sensitivity_gives_zero():
    pmf = np.array([0.1, 0.2, 0.4, 0.2, 0.1])
    assert llr_distance(pmf, 1, 1) == 0.0


def test_audit_rejects_approximate_mechanisms_and_large_n():
    sk = derive_protocol_params(DIST, Mechanism.SKELLAM, 1.0, n=2, p=0.1)
    with pytest.raises(UnsupportedCombination):
        audit_llr(sk)
    big = derive_protocol_params(DIST, POLYA, 1.0, n=8, p=0.1)
    with pytest.raises(InvalidParams):
        audit_llr(big)
