"""The privacy protocol: randomizer, secure aggregation, analyzer.

A batch of n users runs a three-part protocol.  Each user encodes a reward
x in [0,1] as an integer with precision g via randomized rounding, adds a
mechanism-specific discrete noise, and reduces mod m.  A secure-computation
step (modeled here as a perfect or relaxed modular-sum oracle) exposes only
the modular sum of the batch to the server.  The analyzer corrects for
modular underflow and rescales by g, recovering the batch reward sum up to
noise and rounding error whenever the noisy sum lies in [-tau, n g + tau].

Mechanism-specific noise per user:

* distributed pure-DP: eta = gamma+ - gamma- with gamma ~ Pólya(1/n, e^{-eps/g}),
  so the batch total is exactly Lap_Z(g/eps);
* distributed Skellam: eta ~ Sk(0, g^2/(n eps^2)), batch total Sk(0, g^2/eps^2);
* distributed discrete Gaussian: eta ~ N_Z(0, g^2/(n eps^2));
* local: eta ~ Lap_Z(g/eps) at every user (no aggregation needed for privacy);
* central: no local noise; the analyzer itself injects Lap_Z(g/eps).

``audit_llr`` is a brute-force check of the pure-DP guarantee: it builds the
exact output distribution of the batch mechanism on every pair of
neighboring {0,1}-reward datasets and reports the largest log-likelihood
ratio over the (mass-truncated) support.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, UnsupportedCombination
from .noise import (
    DiscreteGaussianParams,
    DiscreteLaplaceParams,
    PolyaParams,
    discrete_laplace_pmf,
    polya_pmf,
    sample_discrete_gaussian,
    sample_discrete_laplace,
    sample_polya,
    sample_skellam,
    SkellamParams,
)
from .rng import RngStream

__all__ = [
    "TrustModel",
    "Mechanism",
    "RelaxedAgg",
    "ProtocolParams",
    "AggregateView",
    "derive_protocol_params",
    "encode_reward",
    "randomize",
    "secagg",
    "relaxed_secagg",
    "analyze",
    "end_to_end_batch_sum",
    "audit_llr",
    "llr_distance",
]


class TrustModel(enum.Enum):
    CENTRAL = "central"
    LOCAL = "local"
    DISTRIBUTED = "distributed"


class Mechanism(enum.Enum):
    DISCRETE_LAPLACE_POLYA = "discrete_laplace"
    SKELLAM = "skellam"
    DISCRETE_GAUSSIAN = "discrete_gaussian"
    CONTINUOUS_LAPLACE_CENTRAL = "continuous_laplace"


# (trust, mechanism) pairings that have a defined protocol
_SUPPORTED = {
    (TrustModel.DISTRIBUTED, Mechanism.DISCRETE_LAPLACE_POLYA),
    (TrustModel.DISTRIBUTED, Mechanism.SKELLAM),
    (TrustModel.DISTRIBUTED, Mechanism.DISCRETE_GAUSSIAN),
    (TrustModel.LOCAL, Mechanism.DISCRETE_LAPLACE_POLYA),
    (TrustModel.CENTRAL, Mechanism.DISCRETE_LAPLACE_POLYA),
    (TrustModel.CENTRAL, Mechanism.CONTINUOUS_LAPLACE_CENTRAL),
}


@dataclass(frozen=True)
class RelaxedAgg:
    """Parameters of an (eps_hat, q_hat)-relaxed aggregation oracle.

    ``q_hat`` is the probability that the aggregate is unusable garbage;
    ``eps_hat`` is the extra leakage beyond the modular sum and enters only
    the privacy accounting, never the simulation.
    """

    eps_hat: float
    q_hat: float

    def __post_init__(self):
        if self.eps_hat < 0:
            raise InvalidParams(f"eps_hat must be nonnegative, got {self.eps_hat}")
        if not (0 <= self.q_hat < 1):
            raise InvalidParams(f"q_hat must lie in [0, 1), got {self.q_hat}")


@dataclass(frozen=True)
class ProtocolParams:
    """All per-batch protocol constants.

    ``epsilon`` is the privacy parameter the noise is calibrated to; when
    ``relaxed`` is set this is the already-halved budget (the other half is
    reserved for the relaxed oracle's leakage, see
    :func:`derive_protocol_params`).
    """

    trust: TrustModel
    mechanism: Mechanism
    epsilon: float
    s: float
    n: int
    g: int
    tau: int
    m: int
    p: float
    relaxed: RelaxedAgg | None = None

    def __post_init__(self):
        if (self.trust, self.mechanism) not in _SUPPORTED:
            raise UnsupportedCombination(
                f"{self.mechanism.value} is not defined under the {self.trust.value} model"
            )
        if not (self.epsilon > 0):
            raise InvalidParams(f"epsilon must be positive, got {self.epsilon}")
        if not (self.s >= 1):
            raise InvalidParams(f"scaling factor s must be >= 1, got {self.s}")
        if self.n < 1:
            raise InvalidParams(f"batch size n must be >= 1, got {self.n}")
        if not (self.p > 0):
            raise InvalidParams(f"failure budget p must be positive, got {self.p}")
        if self.mechanism is Mechanism.CONTINUOUS_LAPLACE_CENTRAL:
            return  # no integer pipeline; g/tau/m are unused
        if self.g < 1 or self.tau < 1:
            raise InvalidParams("g and tau must be >= 1")
        if self.m != self.n * self.g + 2 * self.tau + 1:
            raise InvalidParams(
                f"modulus must equal n*g + 2*tau + 1 = "
                f"{self.n * self.g + 2 * self.tau + 1}, got {self.m}"
            )
        if self.relaxed is not None and not (
            self.trust is TrustModel.DISTRIBUTED
            and self.mechanism is Mechanism.DISCRETE_LAPLACE_POLYA
        ):
            raise UnsupportedCombination(
                "relaxed aggregation is modeled only for the distributed pure-DP protocol"
            )

    def to_kv(self) -> str:
        """Flat key=value rendering (one line), the config-file exchange form."""
        parts = [
            f"trust={self.trust.value}",
            f"mechanism={self.mechanism.value}",
            f"epsilon={self.epsilon!r}",
            f"s={self.s!r}",
            f"n={self.n}",
            f"g={self.g}",
            f"tau={self.tau}",
            f"m={self.m}",
            f"p={self.p!r}",
        ]
        if self.relaxed is not None:
            parts.append(f"eps_hat={self.relaxed.eps_hat!r}")
            parts.append(f"q_hat={self.relaxed.q_hat!r}")
        return " ".join(parts)

    @classmethod
    def from_kv(cls, text: str) -> "ProtocolParams":
        kv = {}
        for token in text.split():
            if "=" not in token:
                raise InvalidParams(f"malformed key=value token: {token!r}")
            key, value = token.split("=", 1)
            kv[key] = value
        try:
            relaxed = None
            if "eps_hat" in kv or "q_hat" in kv:
                relaxed = RelaxedAgg(float(kv.pop("eps_hat")), float(kv.pop("q_hat")))
            return cls(
                trust=TrustModel(kv.pop("trust")),
                mechanism=Mechanism(kv.pop("mechanism")),
                epsilon=float(kv.pop("epsilon")),
                s=float(kv.pop("s")),
                n=int(kv.pop("n")),
                g=int(kv.pop("g")),
                tau=int(kv.pop("tau")),
                m=int(kv.pop("m")),
                p=float(kv.pop("p")),
                relaxed=relaxed,
            )
        except KeyError as exc:
            raise InvalidParams(f"missing protocol key: {exc}") from exc


@dataclass(frozen=True)
class AggregateView:
    """What the server sees from one batch: a value in [0, m).

    ``corrupted`` records whether a relaxed aggregation oracle returned
    garbage; it exists for tests only and the analyzer never reads it.
    """

    value: int
    m: int
    corrupted: bool = False

    def __post_init__(self):
        if not (0 <= self.value < self.m):
            raise InvalidParams(f"aggregate value {self.value} outside [0, {self.m})")


def _ceil_at_least_one(x: float) -> int:
    # the modulus bookkeeping needs g, tau >= 1 even when formulas hit 0
    return max(1, math.ceil(x))


def derive_protocol_params(
    trust: TrustModel,
    mechanism: Mechanism,
    epsilon: float,
    s: float = 1.0,
    n: int = 1,
    p: float = 0.1,
    relaxed: bool = False,
    local_tail_constant: float = 2.0,
) -> ProtocolParams:
    """Choose (g, tau, m) for one batch of n users at privacy level epsilon.

    * distributed / central pure-DP: g = ceil(eps sqrt(n)),
      tau = ceil((g/eps) log(2/p));
    * distributed Skellam: g = ceil(s eps sqrt(n)),
      tau = ceil((2g/eps) sqrt(log(2/p)) + sqrt(2) log(2/p));
    * distributed discrete Gaussian: g = ceil(s eps sqrt(n)),
      tau = ceil((g/eps) sqrt(2 log(2/p)));
    * local: g = ceil(eps sqrt(n)), tau = ceil((c g/eps) sqrt(2 n log(2/p)))
      with c = ``local_tail_constant``;
    * relaxed aggregation (shuffle-style): the pure-DP rules run at
      eps' = eps/2 and the result carries (eps_hat = eps/4, q_hat = p).

    Always m = n g + 2 tau + 1, with g and tau clamped to >= 1.  ``p`` may
    reach 2 so that the degenerate log(2/p) = 0 corner is expressible.
    """
    if (trust, mechanism) not in _SUPPORTED:
        raise UnsupportedCombination(
            f"{mechanism.value} is not defined under the {trust.value} model"
        )
    if not (epsilon > 0):
        raise InvalidParams(f"epsilon must be positive, got {epsilon}")
    if n < 1:
        raise InvalidParams(f"batch size must be >= 1, got {n}")
    if not (0 < p <= 2):
        raise InvalidParams(f"failure budget p must lie in (0, 2], got {p}")
    if not (s >= 1):
        raise InvalidParams(f"scaling factor s must be >= 1, got {s}")
    if not (local_tail_constant > 0):
        raise InvalidParams("local tail constant must be positive")
    if relaxed and not (
        trust is TrustModel.DISTRIBUTED and mechanism is Mechanism.DISCRETE_LAPLACE_POLYA
    ):
        raise UnsupportedCombination(
            "relaxed aggregation is modeled only for the distributed pure-DP protocol"
        )

    if mechanism is Mechanism.CONTINUOUS_LAPLACE_CENTRAL:
        # no quantization and no modular pipeline for the continuous baseline
        return ProtocolParams(trust, mechanism, float(epsilon), float(s), int(n), 1, 0, 0, float(p))

    eps_eff = epsilon / 2.0 if relaxed else float(epsilon)
    log_term = math.log(2.0 / p)
    root_n = math.sqrt(n)

    if mechanism is Mechanism.DISCRETE_LAPLACE_POLYA:
        g = _ceil_at_least_one(eps_eff * root_n)
        if trust is TrustModel.LOCAL:
            tau = _ceil_at_least_one(
                (local_tail_constant * g / eps_eff) * math.sqrt(2.0 * n * log_term)
            )
        else:
            tau = _ceil_at_least_one((g / eps_eff) * log_term)
    elif mechanism is Mechanism.SKELLAM:
        g = _ceil_at_least_one(s * eps_eff * root_n)
        tau = _ceil_at_least_one(
            (2.0 * g / eps_eff) * math.sqrt(log_term) + math.sqrt(2.0) * log_term
        )
    else:  # discrete Gaussian
        g = _ceil_at_least_one(s * eps_eff * root_n)
        tau = _ceil_at_least_one((g / eps_eff) * math.sqrt(2.0 * log_term))

    m = n * g + 2 * tau + 1
    relaxed_params = RelaxedAgg(eps_hat=epsilon / 4.0, q_hat=float(p)) if relaxed else None
    return ProtocolParams(
        trust, mechanism, eps_eff, float(s), int(n), g, tau, m, float(p), relaxed_params
    )


def encode_reward(x, g: int, rng: RngStream):
    """Randomized rounding of x in [0,1] to an integer in [0, g].

    x_hat = floor(x g) + Ber(x g - floor(x g)), so E[x_hat] = x g exactly.
    Accepts a scalar or an array of rewards.
    """
    if g < 1 or int(g) != g:
        raise InvalidParams(f"precision g must be a positive integer, got {g}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise InvalidParams("rewards must lie in [0, 1]")
    scaled = arr * g
    base = np.floor(scaled)
    frac = scaled - base
    bump = rng.generator.random(arr.shape) < frac
    encoded = (base + bump).astype(np.int64)
    if np.isscalar(x) or arr.ndim == 0:
        return int(encoded)
    return encoded


def _sample_noise(params: ProtocolParams, rng: RngStream, count: int) -> np.ndarray:
    """Per-user protocol noise for one batch (vectorized over users)."""
    trust, mech = params.trust, params.mechanism
    eps, g, n = params.epsilon, params.g, params.n
    if trust is TrustModel.CENTRAL:
        return np.zeros(count, dtype=np.int64)
    if mech is Mechanism.DISCRETE_LAPLACE_POLYA:
        if trust is TrustModel.LOCAL:
            return sample_discrete_laplace(DiscreteLaplaceParams(g / eps), rng, size=count)
        polya = PolyaParams(1.0 / n, math.exp(-eps / g))
        plus = sample_polya(polya, rng, size=count)
        minus = sample_polya(polya, rng, size=count)
        return plus - minus
    if mech is Mechanism.SKELLAM:
        return sample_skellam(SkellamParams(g * g / (n * eps * eps)), rng, size=count)
    if mech is Mechanism.DISCRETE_GAUSSIAN:
        return sample_discrete_gaussian(
            DiscreteGaussianParams(g * g / (n * eps * eps)), rng, size=count
        )
    raise UnsupportedCombination(f"no randomizer noise for {mech.value}")


def randomize(x, params: ProtocolParams, rng: RngStream, zero_noise: bool = False):
    """The per-user randomizer: y = (x_hat + eta) mod m.

    ``zero_noise=True`` swaps eta for 0 (test stub for non-private traces).
    Accepts a scalar reward or an array of rewards for a whole batch.
    """
    if params.mechanism is Mechanism.CONTINUOUS_LAPLACE_CENTRAL:
        raise UnsupportedCombination("the continuous baseline bypasses the integer randomizer")
    encoded = encode_reward(x, params.g, rng)
    scalar = np.isscalar(encoded)
    encoded = np.atleast_1d(np.asarray(encoded, dtype=np.int64))
    if zero_noise:
        eta = np.zeros(encoded.shape[0], dtype=np.int64)
    else:
        eta = _sample_noise(params, rng, encoded.shape[0])
    y = np.mod(encoded + eta, params.m)
    return int(y[0]) if scalar else y


def secagg(messages, m: int) -> AggregateView:
    """Perfect modular-sum aggregation: value = (sum of messages) mod m."""
    if m < 1:
        raise InvalidParams(f"modulus must be >= 1, got {m}")
    arr = np.asarray(messages, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= m):
        raise InvalidParams("messages must lie in [0, m)")
    total = int(arr.sum()) % m
    return AggregateView(value=total, m=m, corrupted=False)


def relaxed_secagg(
    messages, m: int, eps_hat: float, q_hat: float, rng: RngStream
) -> AggregateView:
    """Relaxed aggregation: exact modular sum except with probability q_hat.

    On failure the view is a uniform draw from [0, m) and is flagged
    ``corrupted`` (visible to tests only).  ``eps_hat`` does not alter the
    simulation; the leakage surcharge is applied by the accountant.
    """
    if eps_hat < 0:
        raise InvalidParams(f"eps_hat must be nonnegative, got {eps_hat}")
    if not (0 <= q_hat < 1):
        raise InvalidParams(f"q_hat must lie in [0, 1), got {q_hat}")
    exact = secagg(messages, m)
    if q_hat == 0:
        return exact
    gen = rng.generator
    if gen.random() < q_hat:
        return AggregateView(value=int(gen.integers(0, m)), m=m, corrupted=True)
    return exact


def analyze(
    view: AggregateView,
    params: ProtocolParams,
    rng: RngStream | None = None,
    zero_noise: bool = False,
) -> float:
    """Decode a batch aggregate into an estimate of the batch reward sum.

    Central model only: first add analyzer-side noise eta ~ Lap_Z(g/eps)
    reduced mod m (requires ``rng``).  Then correct for underflow:
    z = (y - m)/g if y > n g + tau else y/g.
    """
    if params.mechanism is Mechanism.CONTINUOUS_LAPLACE_CENTRAL:
        raise UnsupportedCombination("the continuous baseline bypasses the integer analyzer")
    if view.m != params.m:
        raise InvalidParams(f"view modulus {view.m} does not match params modulus {params.m}")
    y = view.value
    if params.trust is TrustModel.CENTRAL and not zero_noise:
        if rng is None:
            raise InvalidParams("central-model analysis needs an RngStream for its noise")
        eta = sample_discrete_laplace(DiscreteLaplaceParams(params.g / params.epsilon), rng)
        y = (y + (eta % params.m)) % params.m
    if y > params.n * params.g + params.tau:
        return (y - params.m) / params.g
    return y / params.g


def end_to_end_batch_sum(
    rewards, params: ProtocolParams, rng: RngStream, zero_noise: bool = False
) -> float:
    """Run randomizer -> aggregation -> analyzer over one batch of rewards."""
    arr = np.asarray(rewards, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != params.n:
        raise InvalidParams(f"expected {params.n} rewards, got shape {arr.shape}")
    messages = randomize(arr, params, rng.split("users"), zero_noise=zero_noise)
    if params.relaxed is not None:
        view = relaxed_secagg(
            messages, params.m, params.relaxed.eps_hat, params.relaxed.q_hat, rng.split("agg")
        )
    else:
        view = secagg(messages, params.m)
    return analyze(view, params, rng.split("analyzer"), zero_noise=zero_noise)


def llr_distance(pmf: np.ndarray, shift_a: int, shift_b: int) -> float:
    """Max |log p(k - shift_a) - log p(k - shift_b)| over the pmf support.

    ``pmf`` is a noise pmf on a contiguous integer support; shifting by the
    two dataset sums and comparing pointwise realizes the log-likelihood
    ratio between the mechanism outputs on the two datasets.  Points where
    either shifted pmf has no mass (truncation) are excluded.
    """
    delta = shift_b - shift_a
    if delta == 0:
        return 0.0
    if delta < 0:
        delta = -delta
    # overlap of supports after shifting: compare p(i) to p(i + delta)
    left = pmf[:-delta] if delta else pmf
    right = pmf[delta:]
    mask = (left > 0) & (right > 0)
    if not np.any(mask):
        raise InvalidParams("truncated supports do not overlap")
    ratios = np.abs(np.log(left[mask]) - np.log(right[mask]))
    return float(ratios.max())


def _polya_difference_pmf(polya: PolyaParams, radius: int) -> np.ndarray:
    """pmf of gamma+ - gamma- on [-radius, radius], both Pólya(r, beta)."""
    ks = np.arange(0, 4 * radius + 1)
    base = polya_pmf(ks, polya)
    # one-sided support to 4*radius leaves only double-precision dust outside
    diff = np.convolve(base, base[::-1])
    center = base.shape[0] - 1
    lo, hi = center - radius, center + radius + 1
    return diff[lo:hi]


def _self_convolve_centered(user_pmf: np.ndarray, n: int, out_radius: int) -> np.ndarray:
    """n-fold convolution of a centered pmf, sliced to [-out_radius, out_radius].

    The input must extend well past ``out_radius`` so that decompositions cut
    off at the input boundary cannot distort the sliced window.
    """
    total = user_pmf
    for _ in range(n - 1):
        total = np.convolve(total, user_pmf)
    center = (total.shape[0] - 1) // 2
    if center < out_radius:
        raise InvalidParams("working support too small for the requested radius")
    return total[center - out_radius : center + out_radius + 1]


def audit_llr(
    params: ProtocolParams,
    n: int | None = None,
    truncation: int | None = None,
    mass_tolerance: float = 1e-12,
) -> float:
    """Brute-force pure-DP audit on a tiny batch with rewards in {0, 1}.

    Builds the exact distribution of H(D) = sum_i x_hat_i + sum_i eta_i by
    analytic convolution of the per-user noise pmfs, then reports the max
    log-likelihood ratio over every pair of neighboring datasets in {0,1}^n.
    The support is truncated where the remaining mass falls below
    ``mass_tolerance`` (override the radius with ``truncation``).

    Only defined for the pure-DP discrete-Laplace mechanisms; Skellam and
    discrete-Gaussian protocols have no finite worst-case ratio to audit.
    """
    if params.mechanism is not Mechanism.DISCRETE_LAPLACE_POLYA:
        raise UnsupportedCombination(
            f"{params.mechanism.value} has no pure-DP guarantee to audit"
        )
    n = params.n if n is None else int(n)
    if not (1 <= n <= 3):
        raise InvalidParams(f"audit is exact-enumeration only; need n <= 3, got {n}")
    eps, g = params.epsilon, params.g
    scale = g / eps

    if truncation is None:
        # radius where the total-noise discrete-Laplace tail drops below tolerance
        truncation = int(math.ceil(scale * math.log(2.0 / mass_tolerance))) + n * g + 2
    radius = int(truncation)
    # working margin: convolution values inside [-radius, radius] must not feel
    # the cutoff of the per-user supports (relative edge error ~ e^{-2*margin/scale})
    work_radius = radius + int(math.ceil(16.0 * scale)) + 4

    if params.trust is TrustModel.DISTRIBUTED:
        polya = PolyaParams(1.0 / n, math.exp(-eps / g))
        user_pmf = _polya_difference_pmf(polya, work_radius)
        noise_pmf = _self_convolve_centered(user_pmf, n, radius)
    elif params.trust is TrustModel.CENTRAL:
        ks = np.arange(-radius, radius + 1)
        noise_pmf = discrete_laplace_pmf(ks, DiscreteLaplaceParams(scale))
    else:  # local: n independent Lap_Z(g/eps)
        ks = np.arange(-work_radius, work_radius + 1)
        user_pmf = discrete_laplace_pmf(ks, DiscreteLaplaceParams(scale))
        noise_pmf = _self_convolve_centered(user_pmf, n, radius)

    # neighboring {0,1}^n datasets: encoded sums differ by exactly g (or 0);
    # every pair at distance g yields the same shifted comparison
    worst = 0.0
    for total in range(n):  # sum of the other n-1 coordinates
        shift_a = g * total
        shift_b = g * (total + 1)
        worst = max(worst, llr_distance(noise_pmf, shift_a, shift_b))
    return worst
