"""Cache TTL estimation over per-key response-change histories.

Three interchangeable estimators produce a non-negative integer TTL in
seconds (0 means "do not cache"):

  static       TTL = beta, a fixed operator-chosen value.
  adaptive     TTL = (now - last_change) * alpha: the longer a response
               has gone unchanged, the longer it may be cached.
  update-risk  TTL = -(bud_k / k) * ln(1 - rho), where bud_k is the time
               since the k-th most recent observed change. rho in [0, 1)
               is the accepted risk of serving a response that has been
               updated meanwhile; k smooths the change-rate estimate over
               the last k changes (k=2 in practice).

Setting rho = 1 - e^(-alpha) with k = 1 makes update-risk coincide with
adaptive; a property test pins that equivalence.

Real-valued estimates are floored into whole seconds (never cache longer
than estimated) and clamped to an optional upper cap. Until an estimator
has the history it needs (one change for adaptive, k changes for
update-risk) it returns 0: unknown objects are not cached.

Everything here is pure: observe() returns a new history, and the
estimators are functions of (config, history, now).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

from .clock import ns_to_seconds

DEFAULT_MAX_TTL_CAP = 30


@dataclass(frozen=True)
class StaticTtl:
    """Fixed TTL of beta seconds; beta=0 disables caching entirely."""

    beta: int

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be >= 0 seconds")


@dataclass(frozen=True)
class AdaptiveTtl:
    """Linear acceptance of staleness relative to the age of the last change."""

    alpha: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True)
class UpdateRiskTtl:
    """Accepted update risk rho in [0, 1) over a k-change history (default 2)."""

    rho: float
    k: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        if self.k < 1:
            raise ValueError("k must be >= 1")


AlgorithmConfig = Union[StaticTtl, AdaptiveTtl, UpdateRiskTtl]


def required_history_depth(config: AlgorithmConfig) -> int:
    """Change timestamps a history must retain for this estimator."""
    if isinstance(config, UpdateRiskTtl):
        return config.k
    return 1


@dataclass(frozen=True)
class ObservationHistory:
    """Per-key record of the digests seen and when they changed.

    change_timestamps holds the instants (ns, strictly increasing) at
    which the response digest differed from the previous one, oldest
    first, at most history_depth entries. The first observation of a key
    counts as a change, which is what lets the estimators ever leave zero
    for objects that are never updated.
    """

    history_depth: int
    last_digest: bytes | None = None
    change_timestamps: tuple[int, ...] = ()
    last_touched: int | None = None

    def __post_init__(self) -> None:
        if self.history_depth < 1:
            raise ValueError("history_depth must be >= 1")
        if len(self.change_timestamps) > self.history_depth:
            raise ValueError("more change timestamps than history_depth allows")
        if any(
            b <= a for a, b in zip(self.change_timestamps, self.change_timestamps[1:])
        ):
            raise ValueError("change_timestamps must be strictly increasing")
        if self.change_timestamps and self.last_digest is None:
            raise ValueError("recorded changes require a last_digest")


def empty_history(history_depth: int) -> ObservationHistory:
    return ObservationHistory(history_depth=history_depth)


def observe(history: ObservationHistory, now_ns: int, digest: bytes) -> ObservationHistory:
    """Fold one fresh-response observation into the history.

    A first observation, or a digest differing from the last one, records
    a change at now_ns (evicting the oldest entry beyond history_depth).
    An identical digest only refreshes last_touched.
    """
    if history.change_timestamps and now_ns < history.change_timestamps[-1]:
        raise ValueError(
            f"non-monotonic observation: {now_ns} precedes last change "
            f"{history.change_timestamps[-1]}"
        )
    if history.last_digest is not None and digest == history.last_digest:
        return replace(history, last_touched=now_ns)
    stamps = history.change_timestamps + (now_ns,)
    if len(stamps) > history.history_depth:
        stamps = stamps[-history.history_depth :]
    return ObservationHistory(
        history_depth=history.history_depth,
        last_digest=digest,
        change_timestamps=stamps,
        last_touched=now_ns,
    )


def _clamp(value: float, max_ttl_cap: int | None) -> int:
    ttl = math.floor(value)
    if ttl < 0:
        return 0
    if max_ttl_cap is not None and ttl > max_ttl_cap:
        return max_ttl_cap
    return ttl


def estimate_static(
    config: StaticTtl,
    history: ObservationHistory,
    now_ns: int,
) -> int:
    """beta, regardless of history."""
    return config.beta


def estimate_adaptive(
    config: AdaptiveTtl,
    history: ObservationHistory,
    now_ns: int,
    max_ttl_cap: int | None = DEFAULT_MAX_TTL_CAP,
) -> int:
    if not history.change_timestamps:
        return 0
    age_s = ns_to_seconds(now_ns - history.change_timestamps[-1])
    return _clamp(age_s * config.alpha, max_ttl_cap)


def estimate_update_risk(
    config: UpdateRiskTtl,
    history: ObservationHistory,
    now_ns: int,
    max_ttl_cap: int | None = DEFAULT_MAX_TTL_CAP,
) -> int:
    if len(history.change_timestamps) < config.k:
        return 0
    bud_s = ns_to_seconds(now_ns - history.change_timestamps[-config.k])
    return _clamp(-(bud_s / config.k) * math.log(1.0 - config.rho), max_ttl_cap)


def estimate(
    config: AlgorithmConfig,
    history: ObservationHistory,
    now_ns: int,
    max_ttl_cap: int | None = DEFAULT_MAX_TTL_CAP,
) -> int:
    """Dispatch to the estimator named by the config."""
    if isinstance(config, StaticTtl):
        return estimate_static(config, history, now_ns)
    if isinstance(config, AdaptiveTtl):
        return estimate_adaptive(config, history, now_ns, max_ttl_cap)
    if isinstance(config, UpdateRiskTtl):
        return estimate_update_risk(config, history, now_ns, max_ttl_cap)
    raise TypeError(f"unknown algorithm config {config!r}")
