"""Single-value service plus the sinusoidal two-actor client workload.

The service holds one opaque value behind two methods: GetValue (empty
request, value in the response) and SetValue (value in the request,
empty OK response). The client side runs two actors:

  query actor    reads the expected value from the shared ledger, issues
                 GetValue through the cache, and classifies the response
                 ok / stale / error.
  update actor   writes a fresh unique value (a monotone counter rendered
                 as decimal bytes) straight to the server, then publishes
                 it in the ledger.

Request pacing for both actors is a Poisson arrival process riding a
sinusoid: each inter-request gap is an exponential draw at the
instantaneous rate (mean 1000 / rate_at(t) ms), rounded to a whole
number of milliseconds and clamped to >= 1.

The ledger is the staleness oracle. expected_value is published only
after the server acknowledges a SetValue, so the ledger never runs ahead
of the server. A response is counted stale only when it matches neither
the expected value read before the query was issued nor the one current
when the response arrived; update values are unique, so a cached stale
body can never collide with a newer expected value, while an update that
lands mid-flight is not miscounted as staleness.
"""

from __future__ import annotations

import math
import threading
from collections.abc import Generator
from dataclasses import dataclass, replace

import numpy as np

from .cache import CacheStats
from .clock import NS_PER_MS, Clock
from .effects import Call, Link, Sleep, TransportError
from .eventlog import EventLog
from .wire import Message

GET_METHOD = "GetValue"
SET_METHOD = "SetValue"

# Update-phase offsets measured against the query sinusoid, keyed by the
# tag used in file names and CLI flags.
PHASE_SHIFTS: dict[str, float] = {
    "0": 0.0,
    "pi4": math.pi / 4,
    "pi2": math.pi / 2,
    "pi": math.pi,
}

DEFAULT_PERIOD_S = 1800.0


@dataclass(frozen=True)
class SinusoidConfig:
    """rate(t) = mean_rate + amplitude * sin(2*pi*t/period + phase)."""

    mean_rate: float
    amplitude: float
    period_s: float = DEFAULT_PERIOD_S
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.period_s <= 0:
            raise ValueError("period_s must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if not self.mean_rate - self.amplitude > 0:
            raise ValueError("mean_rate - amplitude must stay positive")


# Query rate swings over [1, 10] req/s; update rate over [0.05, 1.1].
QUERY_SINUSOID = SinusoidConfig(mean_rate=5.5, amplitude=4.5)
UPDATE_SINUSOID = SinusoidConfig(mean_rate=0.575, amplitude=0.525)


@dataclass(frozen=True)
class WorkloadConfig:
    query: SinusoidConfig = QUERY_SINUSOID
    update: SinusoidConfig = UPDATE_SINUSOID
    duration_s: float = 300.0
    seed: int = 1
    phase_tag: str = "0"

    def __post_init__(self) -> None:
        if self.phase_tag not in PHASE_SHIFTS:
            raise ValueError(
                f"phase_tag must be one of {sorted(PHASE_SHIFTS)}, got {self.phase_tag!r}"
            )
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def phase_shift(self) -> float:
        return PHASE_SHIFTS[self.phase_tag]

    def effective_update(self) -> SinusoidConfig:
        """Update sinusoid with the configured phase shift applied."""
        return replace(self.update, phase=self.update.phase + self.phase_shift)

    def actor_rngs(self) -> tuple[np.random.Generator, np.random.Generator]:
        """Independent (query, update) RNG streams from the run seed."""
        query_ss, update_ss = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.Generator(np.random.PCG64(query_ss)), np.random.Generator(
            np.random.PCG64(update_ss)
        )


def rate_at(cfg: SinusoidConfig, t_s: float) -> float:
    return cfg.mean_rate + cfg.amplitude * math.sin(
        2.0 * math.pi * t_s / cfg.period_s + cfg.phase
    )


def next_delay_ms(cfg: SinusoidConfig, t_s: float, rng: np.random.Generator) -> int:
    """Poisson-process inter-request delay in whole milliseconds, at least 1."""
    mean_ms = 1000.0 / rate_at(cfg, t_s)
    return max(1, int(round(rng.exponential(mean_ms))))


class ValueServer:
    """The upstream service: one value, GetValue/SetValue."""

    def __init__(self, initial_value: bytes = b"0") -> None:
        self._lock = threading.Lock()
        self._value = initial_value
        self._set_count = 0

    @property
    def set_count(self) -> int:
        with self._lock:
            return self._set_count

    def current_value(self) -> bytes:
        with self._lock:
            return self._value

    def handle(self, request: Message) -> Message:
        if request.method == GET_METHOD:
            with self._lock:
                value = self._value
            return Message.response(GET_METHOD, value)
        if request.method == SET_METHOD:
            with self._lock:
                self._value = request.payload
                self._set_count += 1
            return Message.response(SET_METHOD)
        return Message.error_response(request.method, f"unknown method {request.method}")


class StalenessLedger:
    """Shared truth between the update and query actors.

    One writer (the updater) replaces expected_value atomically; the
    query actor reads it and reports each outcome here. Errored queries
    are tracked separately and excluded from the staleness fraction.
    """

    def __init__(self, initial_value: bytes = b"0") -> None:
        self._lock = threading.Lock()
        self._expected = initial_value
        self._total = 0
        self._stale = 0
        self._errored = 0

    @property
    def expected_value(self) -> bytes:
        with self._lock:
            return self._expected

    def publish(self, value: bytes) -> None:
        with self._lock:
            self._expected = value

    def note_ok(self) -> None:
        with self._lock:
            self._total += 1

    def note_stale(self) -> None:
        with self._lock:
            self._total += 1
            self._stale += 1

    def note_error(self) -> None:
        with self._lock:
            self._errored += 1

    @property
    def total_queries(self) -> int:
        with self._lock:
            return self._total

    @property
    def stale_queries(self) -> int:
        with self._lock:
            return self._stale

    @property
    def errored_queries(self) -> int:
        with self._lock:
            return self._errored


def classify_response(
    response: Message | None, expected_before: bytes, ledger: StalenessLedger
) -> str:
    """ok / stale / error for one GetValue outcome."""
    if response is None or not response.ok:
        return "error"
    if response.payload == expected_before:
        return "ok"
    if response.payload == ledger.expected_value:
        return "ok"
    return "stale"


def query_actor(
    sinusoid: SinusoidConfig,
    clock: Clock,
    cache_link: Link,
    ledger: StalenessLedger,
    rng: np.random.Generator,
    start_ns: int,
    end_ns: int,
    log: EventLog | None = None,
) -> Generator:
    """Issue GetValue at the sinusoid's pace until end_ns."""
    while clock.now_ns() < end_ns:
        expected = ledger.expected_value
        try:
            response = yield Call(cache_link, Message.request(GET_METHOD))
        except TransportError:
            response = None
        outcome = classify_response(response, expected, ledger)
        if outcome == "ok":
            ledger.note_ok()
        elif outcome == "stale":
            ledger.note_stale()
        else:
            ledger.note_error()
        now_ns = clock.now_ns()
        if log is not None:
            log.record(now_ns, "client", GET_METHOD, outcome)
        t_s = (now_ns - start_ns) / 1e9
        yield Sleep(next_delay_ms(sinusoid, t_s, rng) * NS_PER_MS)


def update_actor(
    sinusoid: SinusoidConfig,
    clock: Clock,
    server_link: Link,
    ledger: StalenessLedger,
    rng: np.random.Generator,
    start_ns: int,
    end_ns: int,
    log: EventLog | None = None,
) -> Generator:
    """Write fresh unique values at the sinusoid's pace until end_ns."""
    counter = 0
    while clock.now_ns() < end_ns:
        counter += 1
        value = str(counter).encode("ascii")
        request = Message.request(SET_METHOD, value)
        response = None
        for _ in range(2):  # one retry on transport failure
            try:
                response = yield Call(server_link, request)
            except TransportError:
                continue
            break
        if response is not None and response.ok:
            ledger.publish(value)
            outcome = "ok"
        else:
            outcome = "error"
        now_ns = clock.now_ns()
        if log is not None:
            log.record(now_ns, "client", SET_METHOD, outcome)
        t_s = (now_ns - start_ns) / 1e9
        yield Sleep(next_delay_ms(sinusoid, t_s, rng) * NS_PER_MS)


def error_fraction(ledger: StalenessLedger) -> float:
    """Stale share of completed queries (errored queries excluded)."""
    total = ledger.total_queries
    if total == 0:
        raise ValueError("error fraction is undefined with zero completed queries")
    return ledger.stale_queries / total


def traffic_reduction(stats: CacheStats) -> float:
    """Share of requests the cache answered without going upstream."""
    if stats.requests == 0:
        raise ValueError("traffic reduction is undefined with zero requests")
    return stats.hits / stats.requests
