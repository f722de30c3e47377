"""Closed-form rate expressions and analytic bounds for broadcast coded caching.

All rates are in units of files per slot (shared-link load normalized by the
file size F).  Catalog-size arguments are accepted as reals so that the
overprovisioned size ``alpha * N`` can be evaluated without rounding; the
simulation modules round the cache list length up to an integer themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SystemParams:
    """Parameters of a broadcast caching system.

    num_users:     K, users sharing the broadcast link.
    catalog_size:  N, files in the popular set at any time.
    memory:        M, per-user cache size in units of files.
    alpha:         overprovision factor; coded policies track ceil(alpha*N)
                   partially cached files.
    arrival_prob:  p, per-slot probability that one popular file is replaced.
    """

    num_users: int
    catalog_size: int
    memory: float
    alpha: float = 1.4
    arrival_prob: float = 0.0

    def __post_init__(self) -> None:
        if self.num_users < 1:
            raise ValueError(f"num_users must be >= 1, got {self.num_users}")
        if self.catalog_size < self.num_users:
            raise ValueError(
                f"catalog_size ({self.catalog_size}) must be >= num_users "
                f"({self.num_users}): demands are drawn without replacement"
            )
        if self.alpha < 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if not 0.0 <= self.memory <= self.alpha * self.catalog_size + 1e-9:
            raise ValueError(
                f"memory must lie in [0, alpha*N] = [0, {self.alpha * self.catalog_size}], "
                f"got {self.memory}"
            )
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ValueError(f"arrival_prob must lie in [0, 1], got {self.arrival_prob}")

    @property
    def partial_list_size(self) -> int:
        """Number of partially cached files, ceil(alpha * N)."""
        return partial_list_size(self.catalog_size, self.alpha)


@dataclass(frozen=True)
class RateBounds:
    """Lower and upper bounds on the optimal long-term average rate."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")


def partial_list_size(catalog_size: int, alpha: float) -> int:
    # Guard against float noise like 1.1 * 1000 = 1100.0000000000002.
    return math.ceil(alpha * catalog_size - 1e-9)


def expected_rate(memory: float, catalog_size: float, num_users: int) -> float:
    """Peak rate of decentralized coded delivery, in files per slot.

    Evaluates K * (1 - M/N) * (N / (K*M)) * (1 - (1 - M/N)**K).  Continuous
    limits are used at the boundary: M = 0 gives K (every request costs a
    whole file) and K = 0 gives 0 (nothing to send).
    """
    if catalog_size <= 0:
        raise ValueError(f"catalog_size must be positive, got {catalog_size}")
    if memory < 0:
        raise ValueError(f"memory must be nonnegative, got {memory}")
    if memory > catalog_size * (1 + 1e-12):
        raise ValueError(
            f"memory ({memory}) may not exceed catalog_size ({catalog_size})"
        )
    if num_users < 0:
        raise ValueError(f"num_users must be nonnegative, got {num_users}")
    if num_users == 0:
        return 0.0
    if memory == 0:
        return float(num_users)
    frac = memory / catalog_size
    if frac >= 1.0:
        return 0.0
    return (catalog_size / memory - 1.0) * (1.0 - (1.0 - frac) ** num_users)


def global_gain(memory: float, catalog_size: float, num_users: int) -> float:
    """Multicast coding factor (N / (K*M)) * (1 - (1 - M/N)**K), in (0, 1]."""
    if not 0 < memory <= catalog_size:
        raise ValueError("global gain defined for 0 < memory <= catalog_size")
    frac = memory / catalog_size
    return (1.0 - (1.0 - frac) ** num_users) / (num_users * frac)


def optimal_rate_bounds(params: SystemParams) -> RateBounds:
    """Sandwich on the optimal online scheme's long-term average rate.

    The rate of the best online policy lies between R/12 and 2R + 6 where
    R = expected_rate(M, N, K).
    """
    rate = expected_rate(params.memory, params.catalog_size, params.num_users)
    return RateBounds(lower=rate / 12.0, upper=2.0 * rate + 6.0)


def overprovision_penalty(alpha: float) -> float:
    """Additive rate cost of tracking alpha*N instead of N files.

    Returns (alpha - 1) / (1 - alpha/2), the constant in
    expected_rate(M, alpha*N, K) <= 2 * expected_rate(M, N, K) + penalty.
    Only valid for 1 <= alpha < 2; at alpha >= 2 the bound is vacuous.
    """
    if not 1.0 <= alpha < 2.0:
        raise ValueError(f"alpha must lie in [1, 2), got {alpha}")
    return (alpha - 1.0) / (1.0 - alpha / 2.0)


def cached_fraction_lower_bound(p: float, catalog_size: int, num_users: int, alpha: float) -> float:
    """Lower bound on the stationary correctly-cached fraction E(X)/N.

    Applies to the random-eviction coded policy.  With pt = p / (1 - p/N)
    and beta = 1/alpha, the smaller root of the stationary quadratic is
    bounded below by (pt + 2*K*beta - pt*(1+beta)/(1-beta)) / (2*K*beta),
    independent of the variance of X/N.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if num_users < 1:
        raise ValueError(f"num_users must be >= 1, got {num_users}")
    if catalog_size <= max(1.0, p):
        raise ValueError(f"catalog_size must exceed max(1, p), got {catalog_size}")
    beta = 1.0 / alpha
    if beta >= 1.0:
        raise ValueError(f"alpha must exceed 1 (division by 1 - 1/alpha), got {alpha}")
    pt = p / (1.0 - p / catalog_size)
    k = float(num_users)
    return (pt + 2.0 * k * beta - pt * (1.0 + beta) / (1.0 - beta)) / (2.0 * k * beta)


def uncached_request_bound(catalog_size: int, alpha: float) -> float:
    """Bound on the stationary mean number of uncached requests per slot.

    Under random eviction, K * (1 - E(X)/N) <= 1 / ((1 - 1/N)(1 - 1/alpha)).
    """
    if catalog_size <= 1:
        raise ValueError(f"catalog_size must be >= 2, got {catalog_size}")
    if alpha <= 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    return 1.0 / ((1.0 - 1.0 / catalog_size) * (1.0 - 1.0 / alpha))
