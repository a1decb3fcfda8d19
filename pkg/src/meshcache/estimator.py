"""Estimator sidecar: always-fresh forwarding plus TTL annotation.

The estimator never answers from local state. Every request goes to the
upstream server; the fresh response is digested, folded into the per-key
observation history, and returned with "cache-control: max-age=N"
metadata where N comes from the configured estimation algorithm. Error
responses pass through untouched (no history update, no TTL: errors are
not cacheable).

Methods on the blacklist (exact names or trailing-'*' prefixes) are
annotated max-age=0 and never gain a history entry, so state-mutating
calls can be excluded from caching.

A housekeeping sweep drops entries idle longer than housekeeping_after
so the table tracks only recently requested keys.
"""

from __future__ import annotations

import threading
from collections.abc import Generator, Iterable

from .clock import Clock, seconds_to_ns
from .digests import cache_key, response_digest
from .effects import Call, Link, Sleep
from .eventlog import EventLog
from .ttl import (
    DEFAULT_MAX_TTL_CAP,
    AlgorithmConfig,
    ObservationHistory,
    empty_history,
    estimate,
    observe,
    required_history_depth,
)
from .wire import Message, validate_method_name

DEFAULT_HOUSEKEEPING_AFTER_S = 300.0


def validate_blacklist(patterns: Iterable[str]) -> tuple[str, ...]:
    """Check blacklist patterns up front: method-name rules, '*' only trailing."""
    checked = []
    for pattern in patterns:
        name = pattern[:-1] if pattern.endswith("*") else pattern
        if "*" in name:
            raise ValueError(f"'*' is only allowed as a trailing wildcard: {pattern!r}")
        if name:
            validate_method_name(name)
        elif not pattern:
            raise ValueError("empty blacklist pattern")
        checked.append(pattern)
    return tuple(checked)


def blacklist_matches(patterns: Iterable[str], method: str) -> bool:
    for pattern in patterns:
        if pattern.endswith("*"):
            if method.startswith(pattern[:-1]):
                return True
        elif method == pattern:
            return True
    return False


class _KeySlot:
    """History holder with its own lock so distinct keys update independently."""

    __slots__ = ("lock", "history")

    def __init__(self, history: ObservationHistory) -> None:
        self.lock = threading.Lock()
        self.history = history


class Estimator:
    """Forwarding sidecar that annotates responses with TTL estimates."""

    def __init__(
        self,
        algorithm: AlgorithmConfig,
        upstream: Link,
        clock: Clock,
        log: EventLog | None = None,
        blacklist: Iterable[str] = (),
        housekeeping_after_s: float = DEFAULT_HOUSEKEEPING_AFTER_S,
        max_ttl_cap: int | None = DEFAULT_MAX_TTL_CAP,
    ) -> None:
        if housekeeping_after_s <= 0:
            raise ValueError("housekeeping_after_s must be positive")
        self._algorithm = algorithm
        self._upstream = upstream
        self._clock = clock
        self._log = log
        self._blacklist = validate_blacklist(blacklist)
        self._housekeeping_after_ns = seconds_to_ns(housekeeping_after_s)
        self._max_ttl_cap = max_ttl_cap
        self._depth = required_history_depth(algorithm)
        self._table: dict[bytes, _KeySlot] = {}
        self._table_lock = threading.Lock()

    @property
    def housekeeping_after_s(self) -> float:
        return self._housekeeping_after_ns / 1e9

    def table_size(self) -> int:
        with self._table_lock:
            return len(self._table)

    def handle(self, request: Message) -> Generator:
        """Handler generator: forward upstream, observe, annotate."""
        response = yield Call(self._upstream, request)
        if not response.ok:
            return response

        if blacklist_matches(self._blacklist, request.method):
            return response.with_metadata("cache-control", "max-age=0")

        key = cache_key(request.method, request.payload)
        with self._table_lock:
            slot = self._table.get(key)
            if slot is None:
                slot = _KeySlot(empty_history(self._depth))
                self._table[key] = slot
        digest = response_digest(response.payload)
        # now is read under the slot lock so per-key observations stay
        # monotonic even when requests race on the real clock.
        with slot.lock:
            now_ns = self._clock.now_ns()
            slot.history = observe(slot.history, now_ns, digest)
            ttl = estimate(self._algorithm, slot.history, now_ns, self._max_ttl_cap)
        if self._log is not None:
            self._log.record(now_ns, "estimator", request.method, "estimate", str(ttl))
        return response.with_metadata("cache-control", f"max-age={ttl}")

    def housekeeping_sweep(self, now_ns: int | None = None) -> int:
        """Evict entries idle longer than the housekeeping window."""
        if now_ns is None:
            now_ns = self._clock.now_ns()
        with self._table_lock:
            items = list(self._table.items())
        evicted = 0
        for key, slot in items:
            with slot.lock:
                touched = slot.history.last_touched
                stale = touched is not None and now_ns - touched > self._housekeeping_after_ns
            if stale:
                with self._table_lock:
                    if self._table.get(key) is slot:
                        del self._table[key]
                        evicted += 1
        return evicted


def housekeeping_loop(estimator: Estimator, end_ns: int, clock: Clock) -> Generator:
    """Periodic sweep actor: runs every housekeeping_after/10 until end_ns."""
    interval_ns = seconds_to_ns(estimator.housekeeping_after_s / 10.0)
    while clock.now_ns() + interval_ns <= end_ns:
        yield Sleep(interval_ns)
        estimator.housekeeping_sweep()
