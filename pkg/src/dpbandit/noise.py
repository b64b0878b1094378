"""Exact samplers and analytic pmf/tail functions for the discrete noise laws.

Four distributions drive the privacy protocols:

* Pólya(r, beta): nonnegative-integer law with pmf
  ``Gamma(x+r) / (x! Gamma(r)) * beta^x * (1-beta)^r``.  Signed sums of
  2n i.i.d. Pólya(1/n, e^{-1/b}) draws realize a discrete Laplace of scale
  b, which is how n users jointly simulate central discrete-Laplace noise.
* Discrete Laplace Lap_Z(b): pmf ``(e^{1/b}-1)/(e^{1/b}+1) * e^{-|x|/b}``.
* Skellam Sk(0, sigma^2): difference of two Poisson(sigma^2/2); closed under
  summation and sub-exponential in the tails.
* Discrete Gaussian N_Z(0, sigma^2): pmf proportional to ``e^{-x^2/(2 sigma^2)}``,
  sampled exactly by rejection from a discrete-Laplace proposal (no
  truncation of the support).

All samplers accept an optional ``size``; ``size=None`` returns a Python int.
They are pure given an explicit :class:`~dpbandit.rng.RngStream` and safe to
call concurrently as long as each caller owns its own stream.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidParams
from .rng import RngStream

__all__ = [
    "PolyaParams",
    "DiscreteLaplaceParams",
    "SkellamParams",
    "DiscreteGaussianParams",
    "sample_polya",
    "sample_discrete_laplace",
    "sample_skellam",
    "sample_discrete_gaussian",
    "discrete_laplace_tail",
    "skellam_tail_radius",
    "polya_pmf",
    "discrete_laplace_pmf",
    "discrete_gaussian_pmf",
]


class PolyaParams:
    """Shape r > 0 and success parameter beta in [0, 1)."""

    __slots__ = ("r", "beta")

    def __init__(self, r: float, beta: float):
        if not (r > 0):
            raise InvalidParams(f"Polya shape r must be positive, got {r}")
        if not (0 <= beta < 1):
            raise InvalidParams(f"Polya beta must lie in [0, 1), got {beta}")
        self.r = float(r)
        self.beta = float(beta)


class DiscreteLaplaceParams:
    """Scale b > 0 of Lap_Z(b)."""

    __slots__ = ("b",)

    def __init__(self, b: float):
        if not (b > 0):
            raise InvalidParams(f"discrete Laplace scale must be positive, got {b}")
        self.b = float(b)


class SkellamParams:
    """Variance sigma^2 > 0 of the zero-mean Skellam law."""

    __slots__ = ("sigma2",)

    def __init__(self, sigma2: float):
        if not (sigma2 > 0):
            raise InvalidParams(f"Skellam variance must be positive, got {sigma2}")
        self.sigma2 = float(sigma2)


class DiscreteGaussianParams:
    """Scale sigma^2 > 0 of the zero-mean discrete Gaussian."""

    __slots__ = ("sigma2",)

    def __init__(self, sigma2: float):
        if not (sigma2 > 0):
            raise InvalidParams(f"discrete Gaussian scale must be positive, got {sigma2}")
        self.sigma2 = float(sigma2)


def _as_output(values: np.ndarray, size: int | None):
    if size is None:
        return int(values[0])
    return values


def sample_polya(p: PolyaParams, rng: RngStream, size: int | None = None):
    """Draw from Pólya(r, beta) via the Gamma-Poisson mixture.

    lambda ~ Gamma(r, scale=beta/(1-beta)) then X ~ Poisson(lambda); beta = 0
    degenerates to the point mass at 0.
    """
    n = 1 if size is None else int(size)
    gen = rng.generator
    if p.beta == 0.0:
        return _as_output(np.zeros(n, dtype=np.int64), size)
    lam = gen.gamma(shape=p.r, scale=p.beta / (1.0 - p.beta), size=n)
    return _as_output(gen.poisson(lam).astype(np.int64, copy=False), size)


def sample_discrete_laplace(p: DiscreteLaplaceParams, rng: RngStream, size: int | None = None):
    """Draw from Lap_Z(b) as the difference of two geometric variables.

    If N1, N2 are i.i.d. with pmf (1-q) q^k on k >= 0 and q = e^{-1/b}, then
    N1 - N2 has exactly the Lap_Z(b) pmf.  This route is independent of the
    Gamma-Poisson path used by :func:`sample_polya`, which lets tests
    cross-validate the two constructions.
    """
    n = 1 if size is None else int(size)
    gen = rng.generator
    # success probability 1 - e^{-1/b}, computed without cancellation
    pr = -math.expm1(-1.0 / p.b)
    n1 = gen.geometric(pr, size=n)
    n2 = gen.geometric(pr, size=n)
    return _as_output((n1 - n2).astype(np.int64, copy=False), size)


def sample_skellam(p: SkellamParams, rng: RngStream, size: int | None = None):
    """Draw from Sk(0, sigma^2) as a difference of two Poisson(sigma^2/2)."""
    n = 1 if size is None else int(size)
    gen = rng.generator
    half = p.sigma2 / 2.0
    d = gen.poisson(half, size=n).astype(np.int64) - gen.poisson(half, size=n).astype(np.int64)
    return _as_output(d, size)


def sample_discrete_gaussian(p: DiscreteGaussianParams, rng: RngStream, size: int | None = None):
    """Draw from N_Z(0, sigma^2) by rejection from a discrete-Laplace proposal.

    The proposal is Lap_Z(t) with t = floor(sigma) + 1; a proposed y is
    accepted with probability exp(-(|y| - sigma^2/t)^2 / (2 sigma^2)), which
    makes the accepted law exactly the discrete Gaussian on all of Z.  The
    support is never truncated.
    """
    want = 1 if size is None else int(size)
    sigma2 = p.sigma2
    t = math.floor(math.sqrt(sigma2)) + 1
    proposal = DiscreteLaplaceParams(float(t))
    gen = rng.generator
    out = np.empty(want, dtype=np.int64)
    filled = 0
    while filled < want:
        batch = max(1024, int(1.6 * (want - filled)))
        y = sample_discrete_laplace(proposal, rng, size=batch)
        resid = np.abs(y) - sigma2 / t
        accept = gen.random(batch) < np.exp(-(resid * resid) / (2.0 * sigma2))
        picked = y[accept]
        take = min(want - filled, picked.shape[0])
        out[filled : filled + take] = picked[:take]
        filled += take
    return _as_output(out, size)


def discrete_laplace_tail(delta_over_eps: float, m: int) -> float:
    """One-sided tail P[Y > m] of Y ~ Lap_Z(b) with scale b = delta_over_eps.

    Closed form: e^{-m/b} / (e^{1/b} + 1), evaluated in the overflow-safe
    arrangement e^{-(m+1)/b} / (1 + e^{-1/b}).
    """
    if not (delta_over_eps > 0):
        raise InvalidParams(f"scale must be positive, got {delta_over_eps}")
    if m < 0:
        raise InvalidParams(f"tail point m must be nonnegative, got {m}")
    b = float(delta_over_eps)
    return math.exp(-(m + 1.0) / b) / (1.0 + math.exp(-1.0 / b))


def _skellam_tail_radius_raw(sigma: float, p: float) -> float:
    # algebraic form, no domain checks; callers own validation
    log_term = math.log(2.0 / p)
    return 2.0 * sigma * math.sqrt(log_term) + math.sqrt(2.0) * log_term


def skellam_tail_radius(sigma: float, p: float) -> float:
    """Radius t with P[|X| > t] <= p for X ~ Sk(0, sigma^2).

    From the sub-exponential bound: t = 2 sigma sqrt(log(2/p)) + sqrt(2) log(2/p).
    """
    if not (sigma > 0):
        raise InvalidParams(f"sigma must be positive, got {sigma}")
    if not (0 < p <= 1):
        raise InvalidParams(f"tail probability must lie in (0, 1], got {p}")
    return _skellam_tail_radius_raw(sigma, p)


def polya_pmf(k, p: PolyaParams):
    """pmf of Pólya(r, beta) at integer points k (vectorized)."""
    k = np.asarray(k)
    r, beta = p.r, p.beta
    with np.errstate(divide="ignore"):
        if beta == 0.0:
            return np.where(k == 0, 1.0, 0.0)
        from scipy.special import gammaln

        logpmf = (
            gammaln(k + r)
            - gammaln(k + 1)
            - gammaln(r)
            + k * math.log(beta)
            + r * math.log1p(-beta)
        )
    out = np.exp(logpmf)
    return np.where(k >= 0, out, 0.0)


def discrete_laplace_pmf(k, p: DiscreteLaplaceParams):
    """pmf of Lap_Z(b) at integer points k (vectorized)."""
    k = np.asarray(k)
    b = p.b
    norm = math.tanh(0.5 / b)  # = (e^{1/b}-1)/(e^{1/b}+1)
    return norm * np.exp(-np.abs(k) / b)


def discrete_gaussian_pmf(k, p: DiscreteGaussianParams, radius: int | None = None):
    """pmf of N_Z(0, sigma^2) at integer points k, with numeric normalizer.

    The normalizer sums e^{-y^2/(2 sigma^2)} over |y| <= radius; the default
    radius keeps the neglected mass far below double precision.
    """
    k = np.asarray(k)
    sigma2 = p.sigma2
    if radius is None:
        radius = int(math.ceil(10.0 * math.sqrt(sigma2))) + 10
    support = np.arange(-radius, radius + 1)
    weights = np.exp(-(support.astype(float) ** 2) / (2.0 * sigma2))
    return np.exp(-(k.astype(float) ** 2) / (2.0 * sigma2)) / weights.sum()
