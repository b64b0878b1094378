"""Closed-form privacy accounting.

Covers the guarantees the protocols provide and the standard conversions
between them:

* pure (eps, 0)-DP for the discrete-Laplace protocols, with the relaxed
  aggregation surcharge 2*eps_hat + eps' when a shuffle-style oracle is used;
* Renyi DP curves for the Skellam protocol at integer orders alpha >= 2;
* concentrated DP (eps(alpha) = eps_hat^2 alpha / 2 for all alpha > 1) for
  the discrete-Gaussian protocol;
* conversion RDP -> (eps, delta)-DP, pure DP -> RDP, advanced composition,
  and the returning-user noise-variance comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import InvalidParams, UnsupportedCombination
from .protocol import Mechanism, ProtocolParams

__all__ = [
    "RdpCurve",
    "PrivacyReport",
    "rdp_skellam",
    "rdp_skellam_batch",
    "skellam_rdp_curve",
    "pure_dp_to_rdp",
    "pure_dp_rdp_curve",
    "cdp_rdp_curve",
    "cdp_discrete_gaussian",
    "rdp_to_approx_dp",
    "advanced_composition",
    "returning_users_variance",
    "report_privacy",
]


@dataclass(frozen=True)
class RdpCurve:
    """A Renyi-DP curve: order alpha -> eps(alpha), with its validity domain.

    ``integer_only`` marks curves that are proved only at integer orders;
    the conversion scan respects that domain.
    """

    evaluate: Callable[[float], float]
    min_order: float = 2.0
    integer_only: bool = False

    def __call__(self, alpha: float) -> float:
        if alpha < self.min_order:
            raise InvalidParams(f"order {alpha} below curve domain [{self.min_order}, inf)")
        if self.integer_only and alpha != int(alpha):
            raise InvalidParams(f"curve is defined only at integer orders, got {alpha}")
        return self.evaluate(alpha)


@dataclass(frozen=True)
class PrivacyReport:
    """Accountant output; at least one field is populated."""

    pure_eps: float | None = None
    rdp: RdpCurve | None = None
    cdp_half_eps2: float | None = None
    approx: tuple[float, float] | None = None  # (eps, delta)

    def __post_init__(self):
        if (
            self.pure_eps is None
            and self.rdp is None
            and self.cdp_half_eps2 is None
            and self.approx is None
        ):
            raise InvalidParams("privacy report must populate at least one field")
        if self.approx is not None and not (0 < self.approx[1] < 1):
            raise InvalidParams(f"approx-DP delta must lie in (0, 1), got {self.approx[1]}")


def _check_skellam_order(alpha) -> int:
    if alpha != int(alpha) or int(alpha) < 2:
        raise InvalidParams(f"Skellam RDP is defined for integer orders >= 2, got {alpha}")
    return int(alpha)


def rdp_skellam(alpha: int, epsilon: float, s: float) -> float:
    """Batch-uniform RDP bound of the Skellam protocol at integer order alpha.

    eps(alpha) = alpha eps^2 / 2
                 + min{ (2 alpha - 1) eps^2 / (4 s^2) + 3 eps / (2 s^3),
                        3 eps^2 / (2 s) }

    This upper-bounds the per-batch value for every batch size n > 1.
    """
    a = _check_skellam_order(alpha)
    if not (epsilon > 0):
        raise InvalidParams(f"epsilon must be positive, got {epsilon}")
    if not (s >= 1):
        raise InvalidParams(f"scaling factor must be >= 1, got {s}")
    e2 = epsilon * epsilon
    branch_a = (2 * a - 1) * e2 / (4 * s * s) + 3 * epsilon / (2 * s**3)
    branch_b = 3 * e2 / (2 * s)
    return a * e2 / 2 + min(branch_a, branch_b)


def rdp_skellam_batch(alpha: int, epsilon: float, s: float, n: int) -> float:
    """Exact per-batch RDP of the Skellam protocol with batch size n.

    eps_n(alpha) = alpha eps^2 / 2
                   + min{ (2 alpha - 1) eps^2 / (4 s^2 n) + 3 eps / (2 s^3 n^{3/2}),
                          3 eps^2 / (2 s sqrt(n)) }

    Nonincreasing in n; n = 1 recovers :func:`rdp_skellam`.
    """
    a = _check_skellam_order(alpha)
    if not (epsilon > 0):
        raise InvalidParams(f"epsilon must be positive, got {epsilon}")
    if not (s >= 1):
        raise InvalidParams(f"scaling factor must be >= 1, got {s}")
    if n < 1:
        raise InvalidParams(f"batch size must be >= 1, got {n}")
    e2 = epsilon * epsilon
    branch_a = (2 * a - 1) * e2 / (4 * s * s * n) + 3 * epsilon / (2 * s**3 * n**1.5)
    branch_b = 3 * e2 / (2 * s * math.sqrt(n))
    return a * e2 / 2 + min(branch_a, branch_b)


def skellam_rdp_curve(epsilon: float, s: float) -> RdpCurve:
    """The batch-uniform Skellam curve as an integer-order RdpCurve."""
    return RdpCurve(
        evaluate=lambda alpha: rdp_skellam(int(alpha), epsilon, s),
        min_order=2.0,
        integer_only=True,
    )


def pure_dp_to_rdp(epsilon: float, alpha: float) -> float:
    """(eps, 0)-DP implies (alpha, eps^2 alpha / 2)-RDP for every alpha > 1."""
    if epsilon < 0:
        raise InvalidParams(f"epsilon must be nonnegative, got {epsilon}")
    if not (alpha > 1):
        raise InvalidParams(f"order must exceed 1, got {alpha}")
    return 0.5 * epsilon * epsilon * alpha


def pure_dp_rdp_curve(epsilon: float) -> RdpCurve:
    return RdpCurve(evaluate=lambda alpha: pure_dp_to_rdp(epsilon, alpha), min_order=1.0 + 1e-9)


def cdp_rdp_curve(eps_hat: float) -> RdpCurve:
    """Curve of (eps_hat^2 / 2)-concentrated DP: eps(alpha) = eps_hat^2 alpha / 2."""
    if eps_hat < 0:
        raise InvalidParams(f"CDP parameter must be nonnegative, got {eps_hat}")
    return RdpCurve(evaluate=lambda alpha: 0.5 * eps_hat * eps_hat * alpha, min_order=1.0 + 1e-9)


def cdp_discrete_gaussian(epsilon: float, s: float, T: int) -> float:
    """CDP parameter eps_hat of the distributed discrete-Gaussian protocol.

    xi = 10 * sum_{k=1}^{T/2 - 1} exp(-2 pi^2 s^2 k / (k + 1)), summed directly
    with early termination once terms drop below 1e-30, then
    eps_hat = min{ sqrt(eps^2 + xi/2), eps + xi } and the batch view is
    (eps_hat^2 / 2)-CDP.
    """
    if not (epsilon > 0):
        raise InvalidParams(f"epsilon must be positive, got {epsilon}")
    if not (s >= 1):
        raise InvalidParams(f"scaling factor must be >= 1, got {s}")
    if T < 2:
        raise InvalidParams(f"horizon must be >= 2, got {T}")
    coeff = 2.0 * math.pi * math.pi * s * s
    xi = 0.0
    for k in range(1, T // 2):
        term = math.exp(-coeff * k / (k + 1.0))
        xi += term
        if term < 1e-30:
            # terms decrease toward exp(-coeff); nothing left worth adding
            break
    xi *= 10.0
    return min(math.sqrt(epsilon * epsilon + 0.5 * xi), epsilon + xi)


_CONVERSION_MAX_ORDER = 256


def _conversion_value(eps_alpha: float, alpha: float, delta: float) -> float:
    return eps_alpha + math.log(1.0 / (alpha * delta)) / (alpha - 1.0) + math.log(1.0 - 1.0 / alpha)


def rdp_to_approx_dp(curve: RdpCurve, delta: float, max_order: int = _CONVERSION_MAX_ORDER) -> float:
    """Convert an RDP curve to (eps, delta)-DP.

    eps = min over valid orders of eps(alpha) + log(1/(alpha delta))/(alpha-1)
          + log(1 - 1/alpha), scanned over the integer grid [2, max_order]
    intersected with the curve's domain.
    """
    if not (0 < delta < 1):
        raise InvalidParams(f"delta must lie in (0, 1), got {delta}")
    lo = max(2, int(math.ceil(curve.min_order)))
    orders = [a for a in range(lo, max_order + 1)]
    if not orders:
        raise InvalidParams("no valid orders to scan")
    return min(_conversion_value(curve(a), a, delta) for a in orders)


def advanced_composition(eps_total: float, delta_prime: float, k: int) -> float:
    """Per-mechanism eps so that k-fold composition stays (eps_total, k delta + delta')-DP.

    eps = eps_total / (2 sqrt(2 k log(1/delta'))); requires eps_total in (0, 1).
    """
    if not (0 < eps_total < 1):
        raise InvalidParams(f"composition target eps must lie in (0, 1), got {eps_total}")
    if not (0 < delta_prime < 1):
        raise InvalidParams(f"delta' must lie in (0, 1), got {delta_prime}")
    if k < 1:
        raise InvalidParams(f"composition length must be >= 1, got {k}")
    return eps_total / (2.0 * math.sqrt(2.0 * k * math.log(1.0 / delta_prime)))


def returning_users_variance(B: int, epsilon: float, delta: float, mode: str) -> float:
    """Per-batch noise variance needed when one user may appear in B batches.

    With unit leading constant: approximate-DP accounting needs
    B log(1/delta) log(B/delta) / eps^2, while RDP-based accounting needs
    B log(1/delta) / eps^2.  Only the ratio log(B/delta) of the two is
    meaningful; absolute values carry the arbitrary unit constant.
    """
    if B < 1:
        raise InvalidParams(f"batch count must be >= 1, got {B}")
    if not (epsilon > 0):
        raise InvalidParams(f"epsilon must be positive, got {epsilon}")
    if not (0 < delta < 1):
        raise InvalidParams(f"delta must lie in (0, 1), got {delta}")
    base = B * math.log(1.0 / delta) / (epsilon * epsilon)
    key = mode.lower()
    if key in ("approxdp", "approx", "approx_dp"):
        return base * math.log(B / delta)
    if key == "rdp":
        return base
    raise InvalidParams(f"mode must be 'ApproxDP' or 'RDP', got {mode!r}")


def report_privacy(
    params: ProtocolParams, delta: float | None = None, horizon: int | None = None
) -> PrivacyReport:
    """Assemble the privacy guarantees of one batch protocol.

    Pure-DP mechanisms report eps (with the 2*eps_hat + eps' surcharge when a
    relaxed aggregation oracle is in play) plus the implied RDP curve.
    Skellam reports its RDP curve; discrete Gaussian reports its CDP
    parameter (needs ``horizon``).  If ``delta`` is given, an (eps, delta)
    conversion is included where a curve exists.
    """
    mech = params.mechanism
    if mech in (Mechanism.DISCRETE_LAPLACE_POLYA, Mechanism.CONTINUOUS_LAPLACE_CENTRAL):
        pure = params.epsilon
        if params.relaxed is not None:
            pure = 2.0 * params.relaxed.eps_hat + params.epsilon
        curve = pure_dp_rdp_curve(pure)
        approx = (rdp_to_approx_dp(curve, delta), delta) if delta is not None else None
        return PrivacyReport(pure_eps=pure, rdp=curve, approx=approx)
    if mech is Mechanism.SKELLAM:
        curve = skellam_rdp_curve(params.epsilon, params.s)
        approx = (rdp_to_approx_dp(curve, delta), delta) if delta is not None else None
        return PrivacyReport(rdp=curve, approx=approx)
    if mech is Mechanism.DISCRETE_GAUSSIAN:
        if horizon is None:
            raise InvalidParams("discrete-Gaussian accounting needs the horizon T")
        eps_hat = cdp_discrete_gaussian(params.epsilon, params.s, horizon)
        curve = cdp_rdp_curve(eps_hat)
        approx = (rdp_to_approx_dp(curve, delta), delta) if delta is not None else None
        return PrivacyReport(rdp=curve, cdp_half_eps2=0.5 * eps_hat * eps_hat, approx=approx)
    raise UnsupportedCombination(f"no accounting rule for {mech.value}")
