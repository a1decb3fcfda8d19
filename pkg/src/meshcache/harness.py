"""Experiment orchestration: topology wiring, runs, suites, aggregation.

A run wires the four-node topology

    client --> cache --> estimator --> server
       \\----------- updates ----------/

under either the virtual clock (deterministic, runs in milliseconds) or
the real clock over loopback TCP.  Updates go straight to the server by
default; routing them through the cache with SetValue blacklisted is
available as a fidelity option.

Each run directory holds four files:

    events.csv      every timestamped CSV row from all components
    estimator.cfg   the estimator sidecar's key=value config (the run
                    builds the sidecar by parsing this file back)
    result.json     metrics plus the per-window time series
    timeseries.csv  the same windows as CSV for plotting

A suite is the cross product configs x phases x seeds; it aggregates
per (config, phase) by averaging seeds and writes scatter.csv.
"""

from __future__ import annotations

import json
import math
import threading
from collections.abc import Generator, Iterable, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

from .cache import Cache, CacheStats
from .clock import Clock, SystemClock, seconds_to_ns
from .config import (
    EstimatorSettings,
    algorithm_parameter,
    canonical_order,
    format_estimator_config,
    parse_config_id,
    parse_estimator_config,
)
from .effects import Call, Sleep, TransportError, drive
from .estimator import Estimator, housekeeping_loop
from .eventlog import EventLog, EventRow, parse_event_log
from .sim import Simulation
from .tcp import TcpLink, serve
from .wire import Message
from .workload import (
    GET_METHOD,
    PHASE_SHIFTS,
    QUERY_SINUSOID,
    SET_METHOD,
    UPDATE_SINUSOID,
    StalenessLedger,
    ValueServer,
    WorkloadConfig,
    classify_response,
    error_fraction,
    query_actor,
    traffic_reduction,
    update_actor,
)

WINDOW_S = 15.0


@dataclass(frozen=True)
class ExperimentConfig:
    """One run: an algorithm id against one workload instance."""

    config_id: str
    phase_tag: str = "0"
    seed: int = 1
    duration_s: float = 300.0
    clock_mode: str = "virtual"
    period_s: float | None = None  # None: period follows duration
    blacklist: tuple[str, ...] = ()
    housekeeping_after_s: float = 300.0
    max_ttl_cap: int | None = None  # None: estimator default cap
    updates_via_cache: bool = False
    link_latency_s: float = 0.0

    def __post_init__(self) -> None:
        parse_config_id(self.config_id)  # raises ValueError when unknown
        if self.phase_tag not in PHASE_SHIFTS:
            raise ValueError(f"unknown phase tag {self.phase_tag!r}")
        if self.clock_mode not in ("virtual", "real"):
            raise ValueError(f"clock_mode must be virtual or real, got {self.clock_mode!r}")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")

    def workload(self) -> WorkloadConfig:
        period = self.period_s if self.period_s is not None else self.duration_s
        return WorkloadConfig(
            query=replace(QUERY_SINUSOID, period_s=period),
            update=replace(UPDATE_SINUSOID, period_s=period),
            duration_s=self.duration_s,
            seed=self.seed,
            phase_tag=self.phase_tag,
        )

    def estimator_settings(self) -> EstimatorSettings:
        _, algorithm = parse_config_id(self.config_id)
        blacklist = self.blacklist
        if self.updates_via_cache and SET_METHOD not in blacklist:
            blacklist = blacklist + (SET_METHOD,)
        kwargs = {}
        if self.max_ttl_cap is not None:
            kwargs["max_ttl_cap"] = self.max_ttl_cap
        return EstimatorSettings(
            algorithm,
            blacklist=blacklist,
            housekeeping_after_s=self.housekeeping_after_s,
            **kwargs,
        )


@dataclass(frozen=True)
class WindowStats:
    start_s: float
    error_fraction: float
    hit_fraction: float
    mean_ttl: float


@dataclass(frozen=True)
class ExperimentResult:
    config_id: str
    phase_tag: str
    seed: int
    duration_s: float
    clock_mode: str
    error_fraction: float
    traffic_reduction: float
    total_queries: int
    stale_queries: int
    errored_queries: int
    total_updates: int
    cache_stats: CacheStats
    windows: tuple[WindowStats, ...]

    def to_json_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "phase": self.phase_tag,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "clock": self.clock_mode,
            "error_fraction": self.error_fraction,
            "traffic_reduction": self.traffic_reduction,
            "total_queries": self.total_queries,
            "stale_queries": self.stale_queries,
            "errored_queries": self.errored_queries,
            "total_updates": self.total_updates,
            "cache": {
                "hits": self.cache_stats.hits,
                "misses": self.cache_stats.misses,
                "insertions": self.cache_stats.insertions,
                "expirations": self.cache_stats.expirations,
            },
            "windows": [
                [w.start_s, w.error_fraction, w.hit_fraction, w.mean_ttl]
                for w in self.windows
            ],
        }

    @staticmethod
    def from_json_dict(data: dict) -> "ExperimentResult":
        cache = data["cache"]
        return ExperimentResult(
            config_id=data["config_id"],
            phase_tag=data["phase"],
            seed=data["seed"],
            duration_s=data["duration_s"],
            clock_mode=data["clock"],
            error_fraction=data["error_fraction"],
            traffic_reduction=data["traffic_reduction"],
            total_queries=data["total_queries"],
            stale_queries=data["stale_queries"],
            errored_queries=data["errored_queries"],
            total_updates=data["total_updates"],
            cache_stats=CacheStats(
                cache["hits"], cache["misses"], cache["insertions"], cache["expirations"]
            ),
            windows=tuple(WindowStats(*w) for w in data["windows"]),
        )


def compute_windows(
    rows: Iterable[EventRow],
    start_ns: int,
    duration_s: float,
    window_s: float = WINDOW_S,
) -> tuple[WindowStats, ...]:
    """Fixed windows over [0, duration): error fraction, hit fraction, mean TTL."""
    count = max(1, math.ceil(duration_s / window_s))
    window_ns = seconds_to_ns(window_s)
    hits = [0] * count
    misses = [0] * count
    ok = [0] * count
    stale = [0] * count
    ttl_sum = [0.0] * count
    ttl_n = [0] * count
    for row in rows:
        idx = (row.timestamp_ns - start_ns) // window_ns
        idx = min(max(idx, 0), count - 1)
        if row.component == "cache":
            if row.event == "hit":
                hits[idx] += 1
            elif row.event == "miss":
                misses[idx] += 1
        elif row.component == "client" and row.method == GET_METHOD:
            if row.event == "ok":
                ok[idx] += 1
            elif row.event == "stale":
                stale[idx] += 1
        elif row.component == "estimator" and row.event == "estimate":
            ttl_sum[idx] += float(row.value)
            ttl_n[idx] += 1
    windows = []
    for i in range(count):
        queries = ok[i] + stale[i]
        lookups = hits[i] + misses[i]
        windows.append(
            WindowStats(
                start_s=i * window_s,
                error_fraction=stale[i] / queries if queries else 0.0,
                hit_fraction=hits[i] / lookups if lookups else 0.0,
                mean_ttl=ttl_sum[i] / ttl_n[i] if ttl_n[i] else 0.0,
            )
        )
    return tuple(windows)


def _build_estimator(
    settings: EstimatorSettings, upstream, clock: Clock, log: EventLog, out_dir: Path | None
) -> Estimator:
    """Instantiate the estimator from its config file representation.

    The settings always round-trip through the flat text codec; with an
    output directory the text is also written as estimator.cfg so the run
    directory documents exactly what the sidecar was given.
    """
    text = format_estimator_config(settings)
    if out_dir is not None:
        (out_dir / "estimator.cfg").write_text(text, encoding="ascii")
    parsed = parse_estimator_config(text)
    return Estimator(
        parsed.algorithm,
        upstream,
        clock,
        log,
        blacklist=parsed.blacklist,
        housekeeping_after_s=parsed.housekeeping_after_s,
        max_ttl_cap=parsed.max_ttl_cap,
    )


def _finish_run(
    cfg: ExperimentConfig,
    log: EventLog,
    ledger: StalenessLedger,
    cache: Cache,
    start_ns: int,
    out_dir: Path | None,
) -> ExperimentResult:
    stats = cache.snapshot_stats()
    rows = sorted(log.rows(), key=lambda r: r.timestamp_ns)
    total_updates = sum(
        1
        for r in rows
        if r.component == "client" and r.method == SET_METHOD and r.event == "ok"
    )
    result = ExperimentResult(
        config_id=parse_config_id(cfg.config_id)[0],
        phase_tag=cfg.phase_tag,
        seed=cfg.seed,
        duration_s=cfg.duration_s,
        clock_mode=cfg.clock_mode,
        error_fraction=error_fraction(ledger),
        traffic_reduction=traffic_reduction(stats),
        total_queries=ledger.total_queries,
        stale_queries=ledger.stale_queries,
        errored_queries=ledger.errored_queries,
        total_updates=total_updates,
        cache_stats=stats,
        windows=compute_windows(rows, start_ns, cfg.duration_s),
    )
    if out_dir is not None:
        log.write_to(out_dir / "events.csv")
        write_result(result, out_dir / "result.json")
        write_timeseries(result.windows, out_dir / "timeseries.csv")
    return result


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run one experiment to completion and return its metrics."""
    out_path: Path | None = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
    if cfg.clock_mode == "virtual":
        return _run_virtual(cfg, out_path)
    return _run_real(cfg, out_path)


def _run_virtual(cfg: ExperimentConfig, out_dir: Path | None) -> ExperimentResult:
    sim = Simulation()
    clock = sim.clock
    log = EventLog()
    workload = cfg.workload()
    start_ns = clock.now_ns()
    end_ns = start_ns + seconds_to_ns(cfg.duration_s)

    server = ValueServer()
    server_link = sim.virtual_link(server.handle, cfg.link_latency_s)
    estimator = _build_estimator(cfg.estimator_settings(), server_link, clock, log, out_dir)
    estimator_link = sim.virtual_link(estimator.handle, cfg.link_latency_s)
    cache = Cache(estimator_link, clock, log)
    cache_link = sim.virtual_link(cache.handle, cfg.link_latency_s)
    update_link = cache_link if cfg.updates_via_cache else server_link

    ledger = StalenessLedger(server.current_value())
    query_rng, update_rng = workload.actor_rngs()
    sim.spawn(
        query_actor(workload.query, clock, cache_link, ledger, query_rng, start_ns, end_ns, log)
    )
    sim.spawn(
        update_actor(
            workload.effective_update(),
            clock,
            update_link,
            ledger,
            update_rng,
            start_ns,
            end_ns,
            log,
        )
    )
    sim.spawn(housekeeping_loop(estimator, end_ns, clock))
    sim.run(until_ns=end_ns)
    return _finish_run(cfg, log, ledger, cache, start_ns, out_dir)


def _run_real(cfg: ExperimentConfig, out_dir: Path | None) -> ExperimentResult:
    clock = SystemClock()
    log = EventLog()
    workload = cfg.workload()

    server = ValueServer()
    with serve(server.handle, clock=clock) as server_handle:
        server_link = TcpLink(server_handle.address)
        estimator = _build_estimator(cfg.estimator_settings(), server_link, clock, log, out_dir)
        with serve(estimator.handle, clock=clock) as estimator_handle:
            estimator_link = TcpLink(estimator_handle.address)
            cache = Cache(estimator_link, clock, log)
            with serve(cache.handle, clock=clock) as cache_handle:
                cache_link = TcpLink(cache_handle.address)
                update_link = (
                    TcpLink(cache_handle.address)
                    if cfg.updates_via_cache
                    else TcpLink(server_handle.address)
                )
                ledger = StalenessLedger(server.current_value())
                query_rng, update_rng = workload.actor_rngs()
                start_ns = clock.now_ns()
                end_ns = start_ns + seconds_to_ns(cfg.duration_s)
                actors = [
                    query_actor(
                        workload.query, clock, cache_link, ledger, query_rng,
                        start_ns, end_ns, log,
                    ),
                    update_actor(
                        workload.effective_update(), clock, update_link, ledger,
                        update_rng, start_ns, end_ns, log,
                    ),
                    housekeeping_loop(estimator, end_ns, clock),
                ]
                threads = [
                    threading.Thread(target=drive, args=(actor, clock), daemon=True)
                    for actor in actors
                ]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
                for link in {cache_link, update_link, estimator_link, server_link}:
                    link.close()
    return _finish_run(cfg, log, ledger, cache, start_ns, out_dir)


# Scripted traces: a fixed list of operations at fixed instants, used to
# check the full topology against a straight-line replay oracle.


@dataclass(frozen=True)
class ScriptedOp:
    at_s: float
    kind: str  # "query" | "update"

    def __post_init__(self) -> None:
        if self.kind not in ("query", "update"):
            raise ValueError(f"kind must be query or update, got {self.kind!r}")
        if self.at_s < 0:
            raise ValueError("at_s must be >= 0")


def scripted_actor(
    ops: Sequence[ScriptedOp],
    clock: Clock,
    cache_link,
    server_link,
    ledger: StalenessLedger,
    log: EventLog,
    start_ns: int,
) -> Generator:
    """Replay ops in order at their scripted instants (single actor)."""
    counter = 0
    for op in ops:
        target_ns = start_ns + seconds_to_ns(op.at_s)
        now_ns = clock.now_ns()
        if target_ns > now_ns:
            yield Sleep(target_ns - now_ns)
        if op.kind == "query":
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
            log.record(clock.now_ns(), "client", GET_METHOD, outcome)
        else:
            counter += 1
            value = str(counter).encode("ascii")
            try:
                response = yield Call(server_link, Message.request(SET_METHOD, value))
            except TransportError:
                response = None
            if response is not None and response.ok:
                ledger.publish(value)
                outcome = "ok"
            else:
                outcome = "error"
            log.record(clock.now_ns(), "client", SET_METHOD, outcome)


def run_scripted_trace(
    ops: Sequence[ScriptedOp],
    config_id: str,
    max_ttl_cap: int | None = None,
) -> list[EventRow]:
    """Run a scripted trace through the virtual topology; returns log rows."""
    sim = Simulation()
    clock = sim.clock
    log = EventLog()
    _, algorithm = parse_config_id(config_id)
    kwargs = {"max_ttl_cap": max_ttl_cap} if max_ttl_cap is not None else {}
    settings = EstimatorSettings(algorithm, **kwargs)

    server = ValueServer()
    server_link = sim.virtual_link(server.handle)
    estimator = _build_estimator(settings, server_link, clock, log, None)
    estimator_link = sim.virtual_link(estimator.handle)
    cache = Cache(estimator_link, clock, log)
    cache_link = sim.virtual_link(cache.handle)
    ledger = StalenessLedger(server.current_value())

    sim.spawn(
        scripted_actor(ops, clock, cache_link, server_link, ledger, log, clock.now_ns())
    )
    sim.run()
    return sorted(log.rows(), key=lambda r: r.timestamp_ns)


@dataclass(frozen=True)
class AggregateMetrics:
    """Eq-style metrics recomputed purely from CSV logs."""

    error_fraction: float
    traffic_reduction: float
    total_queries: int
    stale_queries: int
    errored_queries: int
    hits: int
    misses: int


def aggregate_rows(rows: Iterable[EventRow]) -> AggregateMetrics:
    hits = misses = ok = stale = errored = 0
    for row in rows:
        if row.component == "cache":
            if row.event == "hit":
                hits += 1
            elif row.event == "miss":
                misses += 1
        elif row.component == "client" and row.method == GET_METHOD:
            if row.event == "ok":
                ok += 1
            elif row.event == "stale":
                stale += 1
            elif row.event == "error":
                errored += 1
    total = ok + stale
    if total == 0:
        raise ValueError("no completed queries in log")
    if hits + misses == 0:
        raise ValueError("no cache lookups in log")
    return AggregateMetrics(
        error_fraction=stale / total,
        traffic_reduction=hits / (hits + misses),
        total_queries=total,
        stale_queries=stale,
        errored_queries=errored,
        hits=hits,
        misses=misses,
    )


def aggregate_logs(text: str) -> AggregateMetrics:
    """Recompute run metrics from raw CSV text (errors name the row)."""
    return aggregate_rows(parse_event_log(text))


def write_result(result: ExperimentResult, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(result.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="ascii",
    )


def read_result(path: str | Path) -> ExperimentResult:
    return ExperimentResult.from_json_dict(json.loads(Path(path).read_text(encoding="ascii")))


def write_timeseries(windows: Sequence[WindowStats], path: str | Path) -> None:
    lines = ["window_start_s,hit_fraction,error_fraction,mean_ttl"]
    for w in windows:
        lines.append(
            f"{w.start_s:g},{w.hit_fraction:.6f},{w.error_fraction:.6f},{w.mean_ttl:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def scatter_lines(results: Sequence[ExperimentResult]) -> list[str]:
    """Aggregate per (config, phase), seeds averaged, in canonical order."""
    if not results:
        raise ValueError("no results to aggregate")
    groups: dict[tuple[str, str], list[ExperimentResult]] = {}
    for result in results:
        groups.setdefault((result.config_id, result.phase_tag), []).append(result)
    phase_order = list(PHASE_SHIFTS)
    ordered = sorted(
        groups.items(),
        key=lambda item: (canonical_order(item[0][0]), phase_order.index(item[0][1])),
    )
    lines = ["config_id,parameter,phase_shift,traffic_reduction,error_fraction"]
    for (config_id, phase_tag), members in ordered:
        parameter = algorithm_parameter(parse_config_id(config_id)[1])
        mean_tr = sum(r.traffic_reduction for r in members) / len(members)
        mean_ef = sum(r.error_fraction for r in members) / len(members)
        lines.append(
            f"{config_id},{parameter:g},{phase_tag},{mean_tr:.6f},{mean_ef:.6f}"
        )
    return lines


def write_scatter(results: Sequence[ExperimentResult], path: str | Path) -> None:
    Path(path).write_text("\n".join(scatter_lines(results)) + "\n", encoding="ascii")


def run_dir(out_dir: str | Path, config_id: str, phase_tag: str, seed: int) -> Path:
    return Path(out_dir) / config_id / phase_tag / f"seed-{seed}"


@dataclass(frozen=True)
class SuiteOutcome:
    results: tuple[ExperimentResult, ...]
    failures: tuple[tuple[str, str, int, str], ...]  # (config, phase, seed, error)


def run_suite(
    config_ids: Sequence[str],
    phases: Sequence[str],
    seeds: Sequence[int],
    duration_s: float,
    out_dir: str | Path,
    clock_mode: str = "virtual",
    period_s: float | None = None,
) -> SuiteOutcome:
    """Run the cross product and write per-run dirs plus scatter.csv."""
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    ordered_ids = sorted(dict.fromkeys(parse_config_id(c)[0] for c in config_ids),
                         key=canonical_order)
    results: list[ExperimentResult] = []
    failures: list[tuple[str, str, int, str]] = []
    for config_id in ordered_ids:
        for phase in phases:
            for seed in seeds:
                cfg = ExperimentConfig(
                    config_id=config_id,
                    phase_tag=phase,
                    seed=seed,
                    duration_s=duration_s,
                    clock_mode=clock_mode,
                    period_s=period_s,
                )
                try:
                    results.append(
                        run_experiment(cfg, run_dir(out_path, config_id, phase, seed))
                    )
                except Exception as exc:  # noqa: BLE001 - suite keeps going
                    failures.append((config_id, phase, seed, f"{type(exc).__name__}: {exc}"))
    if results:
        write_scatter(results, out_path / "scatter.csv")
    return SuiteOutcome(tuple(results), tuple(failures))


def load_results(root: str | Path) -> list[ExperimentResult]:
    """All result.json files under root, in sorted path order."""
    return [read_result(p) for p in sorted(Path(root).rglob("result.json"))]
