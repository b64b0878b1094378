"""Batch-based successive arm elimination with pluggable privacy protocols.

The engine divides the horizon into batches of doubling size l(b) = 2^b.  In
batch b every active arm is pulled by l(b) fresh users; the batch reward sum
comes back through the privacy protocol, giving a mean estimate with
confidence radius beta(b).  An arm is dropped once its upper confidence
bound falls below the best lower confidence bound among active arms.  Pulls
stop exactly at T; a batch cut short by the horizon contributes pulls (and
regret) but no estimate and no elimination.

The confidence radius combines the sampling error of l(b) bounded rewards
with a sub-exponential tail bound sigma*sqrt(log)/l + h*log/l on the total
protocol noise; (sigma, h) per mechanism come from
:func:`noise_scale_constants`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HorizonTooSmall, InvalidParams, UnsupportedCombination
from .protocol import (
    Mechanism,
    TrustModel,
    derive_protocol_params,
    end_to_end_batch_sum,
)
from .rng import RngStream

__all__ = [
    "BernoulliExact",
    "TruncatedGaussian",
    "BanditInstance",
    "NoiseScale",
    "RegretTrace",
    "clipped_gaussian_mean",
    "sample_rewards",
    "noise_scale_constants",
    "confidence_radius",
    "default_checkpoints",
    "run_batched_se",
    "run_dp_se_baseline",
    "pseudo_regret",
]


@dataclass(frozen=True)
class BernoulliExact:
    """Rewards in {0, 1} with the arm mean hit exactly."""


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian rewards clipped to [0, 1]; clipping shifts the effective mean."""

    std: float

    def __post_init__(self):
        if not (self.std > 0):
            raise InvalidParams(f"reward std must be positive, got {self.std}")


RewardKind = BernoulliExact | TruncatedGaussian


def clipped_gaussian_mean(mu: float, std: float) -> float:
    """Exact mean of clip(N(mu, std^2), 0, 1).

    E = mu (Phi(b) - Phi(a)) - std (phi(b) - phi(a)) + (1 - Phi(b)) with
    a = -mu/std, b = (1 - mu)/std.
    """
    a = (0.0 - mu) / std
    b = (1.0 - mu) / std
    phi = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    cdf = lambda x: 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))
    return mu * (cdf(b) - cdf(a)) - std * (phi(b) - phi(a)) + (1.0 - cdf(b))


@dataclass(frozen=True)
class BanditInstance:
    """Arm means plus the reward sampler they parameterize.

    ``effective_means`` are the means of the rewards actually played: equal
    to ``means`` for Bernoulli arms, and the clipped-Gaussian means for
    truncated Gaussian arms.  Gaps and pseudo-regret use the effective means.
    """

    means: tuple[float, ...]
    reward_kind: RewardKind
    effective_means: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        if len(means) < 2:
            raise InvalidParams(f"need at least 2 arms, got {len(means)}")
        if any(not (0.0 <= m <= 1.0) for m in means):
            raise InvalidParams("arm means must lie in [0, 1]")
        object.__setattr__(self, "means", means)
        if isinstance(self.reward_kind, TruncatedGaussian):
            eff = tuple(clipped_gaussian_mean(m, self.reward_kind.std) for m in means)
        else:
            eff = means
        object.__setattr__(self, "effective_means", eff)

    @property
    def num_arms(self) -> int:
        return len(self.means)

    def best_arm(self) -> int:
        return int(np.argmax(self.effective_means))

    def gaps(self) -> tuple[float, ...]:
        top = max(self.effective_means)
        return tuple(top - m for m in self.effective_means)


def sample_rewards(instance: BanditInstance, arm: int, count: int, rng: RngStream) -> np.ndarray:
    """Draw ``count`` i.i.d. rewards for one arm."""
    if not (0 <= arm < instance.num_arms):
        raise InvalidParams(f"arm {arm} out of range")
    mu = instance.means[arm]
    gen = rng.generator
    if isinstance(instance.reward_kind, TruncatedGaussian):
        return np.clip(gen.normal(mu, instance.reward_kind.std, size=count), 0.0, 1.0)
    return (gen.random(count) < mu).astype(float)


@dataclass(frozen=True)
class NoiseScale:
    """Sub-exponential tail constants (sigma, h) of the total batch noise."""

    sigma: float
    h: float

    def __post_init__(self):
        if self.sigma < 0 or self.h < 0:
            raise InvalidParams("noise scale constants must be nonnegative")


def noise_scale_constants(
    mechanism: Mechanism,
    trust: TrustModel,
    epsilon: float,
    s: float = 1.0,
    n: int | None = None,
    local_tail_constant: float = 2.0,
) -> NoiseScale:
    """The (sigma, h) pair for each protocol, from its tail analysis.

    * pure-DP discrete Laplace (central or distributed): (sqrt(2)/eps, 2/eps);
    * distributed Skellam: ((2 + sqrt(2)/s)/eps, sqrt(2)/(s eps));
    * distributed discrete Gaussian: ((sqrt(2) + sqrt(2)/s)/eps, 0);
    * local: (c sqrt(2 n)/eps, 0), batch-size dependent (pass n per batch);
    * central continuous Laplace: (sqrt(2)/eps, 1/eps).
    """
    if not (epsilon > 0):
        raise InvalidParams(f"epsilon must be positive, got {epsilon}")
    if not (s >= 1):
        raise InvalidParams(f"scaling factor must be >= 1, got {s}")
    root2 = math.sqrt(2.0)
    if mechanism is Mechanism.DISCRETE_LAPLACE_POLYA:
        if trust is TrustModel.LOCAL:
            if n is None or n < 1:
                raise InvalidParams("local-model scale needs the batch size n")
            return NoiseScale(local_tail_constant * math.sqrt(2.0 * n) / epsilon, 0.0)
        if trust in (TrustModel.CENTRAL, TrustModel.DISTRIBUTED):
            return NoiseScale(root2 / epsilon, 2.0 / epsilon)
    if mechanism is Mechanism.SKELLAM and trust is TrustModel.DISTRIBUTED:
        return NoiseScale((2.0 + root2 / s) / epsilon, root2 / (s * epsilon))
    if mechanism is Mechanism.DISCRETE_GAUSSIAN and trust is TrustModel.DISTRIBUTED:
        return NoiseScale((root2 + root2 / s) / epsilon, 0.0)
    if mechanism is Mechanism.CONTINUOUS_LAPLACE_CENTRAL and trust is TrustModel.CENTRAL:
        return NoiseScale(root2 / epsilon, 1.0 / epsilon)
    raise UnsupportedCombination(
        f"no tail constants for {mechanism.value} under the {trust.value} model"
    )


def confidence_radius(
    b: int, active_count: int, l_b: int, scale: NoiseScale, p: float
) -> float:
    """Confidence radius beta(b) around a batch mean estimate.

    beta(b) = sqrt(log(4 A b^2 / p) / (2 l))
              + sigma sqrt(log(2 A b^2 / p)) / l
              + h log(2 A b^2 / p) / l,

    with A the active-arm count at batch start and l = l(b) the batch size.
    Terms with a zero coefficient are skipped, so degenerate parameter
    choices that zero out the log arguments stay well defined.
    """
    if b < 1 or active_count < 1 or l_b < 1:
        raise InvalidParams("batch index, active count, and batch size must be >= 1")
    if not (p > 0):
        raise InvalidParams(f"confidence level p must be positive, got {p}")
    base = active_count * b * b / p
    log4 = math.log(4.0 * base)
    if log4 < 0:
        raise InvalidParams("confidence level p too large for this batch")
    radius = math.sqrt(log4 / (2.0 * l_b))
    if scale.sigma > 0 or scale.h > 0:
        log2 = math.log(2.0 * base)
        if log2 < 0:
            raise InvalidParams("confidence level p too large for this batch")
        if scale.sigma > 0:
            radius += scale.sigma * math.sqrt(log2) / l_b
        if scale.h > 0:
            radius += scale.h * log2 / l_b
    return radius


@dataclass(frozen=True)
class RegretTrace:
    """Cumulative pseudo-regret of one run, recorded at pull-count checkpoints."""

    checkpoints: tuple[tuple[int, float], ...]
    pulls_per_arm: tuple[int, ...]
    eliminated_optimal: bool

    def final_regret(self) -> float:
        if not self.checkpoints:
            raise InvalidParams("trace recorded no checkpoints")
        return self.checkpoints[-1][1]


def default_checkpoints(T: int, points: int = 30) -> tuple[int, ...]:
    """A geometric grid of pull counts up to T (collapsing duplicates)."""
    if T < 1:
        raise InvalidParams(f"horizon must be >= 1, got {T}")
    grid = np.unique(np.rint(np.geomspace(1, T, points)).astype(np.int64))
    return tuple(int(t) for t in grid)


def _normalize_checkpoints(checkpoints, T: int) -> tuple[int, ...]:
    if checkpoints is None:
        return default_checkpoints(T)
    cps = tuple(int(t) for t in checkpoints)
    if any(t < 1 for t in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
        raise InvalidParams("checkpoints must be strictly increasing and >= 1")
    if cps and cps[-1] > T:
        raise InvalidParams(f"last checkpoint {cps[-1]} exceeds horizon {T}")
    return cps


def _run_engine(
    instance: BanditInstance,
    T: int,
    p: float,
    rng: RngStream,
    radius_fn,
    batch_sum_fn,
    checkpoints,
) -> RegretTrace:
    """Shared elimination loop; protocol behavior is injected via callbacks.

    ``radius_fn(b, active_count, l_b) -> float`` and
    ``batch_sum_fn(rewards, b, l_b, stream) -> float``.
    """
    K = instance.num_arms
    if T < 2 * K:
        raise HorizonTooSmall(f"horizon {T} cannot fit the first batch of {2 * K} pulls")
    cps = _normalize_checkpoints(checkpoints, T)
    gaps = instance.gaps()
    best = instance.best_arm()

    active = list(range(K))
    pulls_per_arm = [0] * K
    pulls = 0
    regret = 0.0
    recorded: list[tuple[int, float]] = []
    ci = 0
    eliminated_optimal = False
    b = 1

    while pulls < T:
        l_b = 2**b
        beta = radius_fn(b, len(active), l_b)
        batch_stream = rng.split("batch", b)
        sums: dict[int, float] = {}
        cut_short = False
        for a in active:
            q = min(l_b, T - pulls)
            arm_stream = batch_stream.split("arm", a)
            rewards = sample_rewards(instance, a, q, arm_stream.split("rewards"))
            gap = gaps[a]
            while ci < len(cps) and cps[ci] <= pulls + q:
                recorded.append((cps[ci], regret + gap * (cps[ci] - pulls)))
                ci += 1
            pulls += q
            pulls_per_arm[a] += q
            regret += gap * q
            if q < l_b or pulls >= T:
                # horizon reached inside the user loop: no aggregation, no
                # elimination for this batch
                cut_short = True
                break
            sums[a] = batch_sum_fn(rewards, b, l_b, arm_stream.split("protocol"))
        if cut_short:
            break
        estimates = {a: sums[a] / l_b for a in active}
        max_lcb = max(estimates[a] - beta for a in active)
        survivors = [a for a in active if estimates[a] + beta >= max_lcb]
        if best in active and best not in survivors:
            eliminated_optimal = True
        active = survivors
        b += 1

    return RegretTrace(
        checkpoints=tuple(recorded),
        pulls_per_arm=tuple(pulls_per_arm),
        eliminated_optimal=eliminated_optimal,
    )


def run_batched_se(
    instance: BanditInstance,
    trust: TrustModel,
    mechanism: Mechanism,
    epsilon: float,
    s: float,
    T: int,
    p: float,
    rng: RngStream,
    checkpoints=None,
    local_tail_constant: float = 2.0,
    zero_noise: bool = False,
) -> RegretTrace:
    """Run batch-based successive elimination behind a privacy protocol.

    Per batch b each active arm gets l(b) = 2^b fresh users whose rewards go
    through the protocol derived for n = l(b); the analyzer output divided
    by l(b) is the mean estimate.  ``zero_noise=True`` disables all protocol
    noise and sets sigma = h = 0 (deterministic non-private traces for
    tests).
    """
    if mechanism is Mechanism.CONTINUOUS_LAPLACE_CENTRAL:
        raise UnsupportedCombination("use run_dp_se_baseline for the continuous baseline")
    if not (0 < p <= 1):
        raise InvalidParams(f"confidence level p must lie in (0, 1], got {p}")

    params_cache: dict[int, object] = {}

    def params_for(l_b: int):
        if l_b not in params_cache:
            params_cache[l_b] = derive_protocol_params(
                trust,
                mechanism,
                epsilon,
                s=s,
                n=l_b,
                p=p,
                local_tail_constant=local_tail_constant,
            )
        return params_cache[l_b]

    if zero_noise:
        scale = NoiseScale(0.0, 0.0)
        radius_fn = lambda b, A, l_b: confidence_radius(b, A, l_b, scale, p)
    elif trust is TrustModel.LOCAL:

        def radius_fn(b, A, l_b):
            scale_b = noise_scale_constants(
                mechanism, trust, epsilon, s, n=l_b, local_tail_constant=local_tail_constant
            )
            return confidence_radius(b, A, l_b, scale_b, p)

    else:
        fixed_scale = noise_scale_constants(mechanism, trust, epsilon, s)
        radius_fn = lambda b, A, l_b: confidence_radius(b, A, l_b, fixed_scale, p)

    def batch_sum_fn(rewards, b, l_b, stream):
        return end_to_end_batch_sum(rewards, params_for(l_b), stream, zero_noise=zero_noise)

    return _run_engine(instance, T, p, rng, radius_fn, batch_sum_fn, checkpoints)


def run_dp_se_baseline(
    instance: BanditInstance,
    epsilon: float,
    T: int,
    p: float,
    rng: RngStream,
    checkpoints=None,
    zero_noise: bool = False,
) -> RegretTrace:
    """Central-model baseline: batch sums + continuous Laplace(1/eps) noise.

    No quantization and no modular arithmetic; each batch sum (sensitivity 1)
    is perturbed directly, and beta(b) uses (sigma, h) = (sqrt(2)/eps, 1/eps).
    """
    if not (epsilon > 0):
        raise InvalidParams(f"epsilon must be positive, got {epsilon}")
    if not (0 < p <= 1):
        raise InvalidParams(f"confidence level p must lie in (0, 1], got {p}")
    scale = (
        NoiseScale(0.0, 0.0)
        if zero_noise
        else noise_scale_constants(
            Mechanism.CONTINUOUS_LAPLACE_CENTRAL, TrustModel.CENTRAL, epsilon
        )
    )

    def radius_fn(b, A, l_b):
        return confidence_radius(b, A, l_b, scale, p)

    def batch_sum_fn(rewards, b, l_b, stream):
        total = float(np.sum(rewards))
        if zero_noise:
            return total
        return total + float(stream.generator.laplace(0.0, 1.0 / epsilon))

    return _run_engine(instance, T, p, rng, radius_fn, batch_sum_fn, checkpoints)


def pseudo_regret(trace: RegretTrace, instance: BanditInstance) -> float:
    """Final cumulative pseudo-regret sum_a gap_a * N_a of one run."""
    if len(trace.pulls_per_arm) != instance.num_arms:
        raise InvalidParams(
            f"trace has {len(trace.pulls_per_arm)} arms, instance has {instance.num_arms}"
        )
    return float(sum(g * n for g, n in zip(instance.gaps(), trace.pulls_per_arm)))
