"""Experiment harness: windows, runs, scripted traces, aggregation, suites."""

import json

import pytest

from meshcache.cache import CacheStats
from meshcache.config import parse_estimator_config
from meshcache.eventlog import EventRow, parse_event_log
from meshcache.harness import (
    ExperimentConfig,
    ExperimentResult,
    ScriptedOp,
    WindowStats,
    aggregate_logs,
    aggregate_rows,
    compute_windows,
    load_results,
    read_result,
    run_dir,
    run_experiment,
    run_scripted_trace,
    run_suite,
    scatter_lines,
    write_result,
    write_timeseries,
)
from meshcache.ttl import UpdateRiskTtl

from trace_oracle import replay_trace

NS = 1_000_000_000


# --- windows ---


def test_compute_windows_hand_checked():
    rows = [
        EventRow(1 * NS, "cache", "GetValue", "miss"),
        EventRow(1 * NS, "estimator", "GetValue", "estimate", "4"),
        EventRow(2 * NS, "cache", "GetValue", "hit"),
        EventRow(2 * NS, "client", "GetValue", "ok"),
        EventRow(3 * NS, "cache", "GetValue", "hit"),
        EventRow(3 * NS, "client", "GetValue", "stale"),
        EventRow(5 * NS, "client", "SetValue", "ok"),  # ignored by both fractions
        EventRow(45 * NS, "cache", "GetValue", "miss"),  # clamped into the last window
    ]
    windows = compute_windows(rows, start_ns=0, duration_s=30.0)
    assert len(windows) == 2
    first, second = windows
    assert first.start_s == 0.0
    assert first.hit_fraction == pytest.approx(2 / 3)
    assert first.error_fraction == pytest.approx(1 / 2)
    assert first.mean_ttl == pytest.approx(4.0)
    assert second.start_s == 15.0
    assert (second.hit_fraction, second.error_fraction, second.mean_ttl) == (0.0, 0.0, 0.0)


def test_window_count_covers_the_duration():
    assert len(compute_windows([], 0, 300.0)) == 20
    assert len(compute_windows([], 0, 1800.0)) == 120
    assert len(compute_windows([], 0, 10.0)) == 1  # partial window still counts


# --- experiment config ---


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(config_id="nosuch-1")
    with pytest.raises(ValueError):
        ExperimentConfig(config_id="static-1", phase_tag="deg90")
    with pytest.raises(ValueError):
        ExperimentConfig(config_id="static-1", clock_mode="sundial")
    with pytest.raises(ValueError):
        ExperimentConfig(config_id="static-1", duration_s=0.0)


def test_workload_period_follows_duration_unless_pinned():
    cfg = ExperimentConfig(config_id="static-1", duration_s=120.0)
    assert cfg.workload().query.period_s == 120.0
    pinned = ExperimentConfig(config_id="static-1", duration_s=120.0, period_s=1800.0)
    assert pinned.workload().update.period_s == 1800.0


def test_updates_via_cache_blacklists_set_value():
    cfg = ExperimentConfig(config_id="adaptive-0.5", updates_via_cache=True)
    assert "SetValue" in cfg.estimator_settings().blacklist
    plain = ExperimentConfig(config_id="adaptive-0.5")
    assert plain.estimator_settings().blacklist == ()


# --- virtual runs ---


def test_static_0_run_has_no_hits_and_no_staleness(tmp_path):
    cfg = ExperimentConfig(config_id="static-0", duration_s=20.0, seed=1)
    result = run_experiment(cfg, tmp_path)
    assert result.traffic_reduction == 0.0
    assert result.error_fraction == 0.0
    assert result.cache_stats.hits == 0
    assert result.total_queries > 0


def test_run_writes_the_four_run_files(tmp_path):
    cfg = ExperimentConfig(config_id="adaptive-0.5", duration_s=20.0)
    result = run_experiment(cfg, tmp_path)
    rows = parse_event_log((tmp_path / "events.csv").read_text())
    assert rows == sorted(rows, key=lambda r: r.timestamp_ns)
    settings = parse_estimator_config((tmp_path / "estimator.cfg").read_text())
    assert settings == cfg.estimator_settings()
    assert read_result(tmp_path / "result.json") == result
    series = (tmp_path / "timeseries.csv").read_text().splitlines()
    assert series[0] == "window_start_s,hit_fraction,error_fraction,mean_ttl"
    assert len(series) == 1 + len(result.windows)


def test_identical_seeds_are_byte_identical(tmp_path):
    cfg = ExperimentConfig(config_id="updaterisk-0.5", duration_s=30.0, seed=9)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("events.csv", "result.json", "timeseries.csv", "estimator.cfg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    other = run_experiment(
        ExperimentConfig(config_id="updaterisk-0.5", duration_s=30.0, seed=10), tmp_path / "c"
    )
    assert (tmp_path / "a" / "events.csv").read_bytes() != (
        tmp_path / "c" / "events.csv"
    ).read_bytes()
    assert other.seed == 10


def test_log_aggregation_agrees_with_in_memory_counters(tmp_path):
    cfg = ExperimentConfig(config_id="adaptive-0.5", duration_s=60.0, seed=2)
    result = run_experiment(cfg, tmp_path)
    metrics = aggregate_logs((tmp_path / "events.csv").read_text())
    assert metrics.hits == result.cache_stats.hits
    assert metrics.misses == result.cache_stats.misses
    assert metrics.error_fraction == result.error_fraction
    assert metrics.traffic_reduction == result.traffic_reduction
    assert metrics.total_queries == result.total_queries
    assert metrics.stale_queries == result.stale_queries


def test_updates_can_be_routed_through_the_cache(tmp_path):
    cfg = ExperimentConfig(
        config_id="adaptive-0.5", duration_s=20.0, updates_via_cache=True
    )
    result = run_experiment(cfg, tmp_path)
    assert result.total_updates > 0
    rows = parse_event_log((tmp_path / "events.csv").read_text())
    set_lookups = [r for r in rows if r.component == "cache" and r.method == "SetValue"]
    assert set_lookups and all(r.event == "miss" for r in set_lookups)


def test_link_latency_shifts_timestamps():
    base = ExperimentConfig(config_id="static-1", duration_s=10.0, link_latency_s=0.05)
    result = run_experiment(base)
    assert result.total_queries > 0


def test_real_clock_backend_smoke(tmp_path):
    cfg = ExperimentConfig(config_id="static-1", duration_s=2.0, clock_mode="real")
    result = run_experiment(cfg, tmp_path)
    assert result.clock_mode == "real"
    assert result.total_queries > 0
    metrics = aggregate_logs((tmp_path / "events.csv").read_text())
    assert metrics.hits == result.cache_stats.hits
    assert metrics.misses == result.cache_stats.misses


# --- scripted traces vs the straight-line oracle ---


def as_tuples(rows):
    return [(r.timestamp_ns, r.component, r.method, r.event, r.value) for r in rows]


def test_scripted_trace_matches_oracle_with_expiry_and_staleness():
    ops = [
        ScriptedOp(0.0, "query"),
        ScriptedOp(10.0, "query"),  # age 10 * 0.5 -> ttl 5, cached until 15
        ScriptedOp(12.0, "query"),  # hit, still current
        ScriptedOp(13.0, "update"),
        ScriptedOp(14.0, "query"),  # hit, now stale
        ScriptedOp(15.0, "query"),  # expiry boundary: miss
        ScriptedOp(20.0, "query"),
    ]
    rows = run_scripted_trace(ops, "adaptive-0.5")
    expected = replay_trace([(op.at_s, op.kind) for op in ops], "adaptive-0.5")
    assert as_tuples(rows) == expected
    stale_rows = [r for r in rows if r.event == "stale"]
    assert [r.timestamp_ns for r in stale_rows] == [14 * NS]


def test_scripted_trace_matches_oracle_update_risk():
    ops = [
        ScriptedOp(0.0, "query"),
        ScriptedOp(1.0, "update"),
        ScriptedOp(2.0, "query"),  # second change: bud engages
        ScriptedOp(3.0, "query"),
        ScriptedOp(5.0, "query"),
    ]
    rows = run_scripted_trace(ops, "updaterisk-0.9")
    expected = replay_trace([(op.at_s, op.kind) for op in ops], "updaterisk-0.9")
    assert as_tuples(rows) == expected
    estimates = [r.value for r in rows if r.event == "estimate"]
    assert estimates == ["0", "2", "5"]


def test_scripted_trace_honors_the_cap():
    ops = [ScriptedOp(0.0, "query"), ScriptedOp(100.0, "query")]
    rows = run_scripted_trace(ops, "adaptive-0.5", max_ttl_cap=3)
    expected = replay_trace([(0.0, "query"), (100.0, "query")], "adaptive-0.5", cap=3)
    assert as_tuples(rows) == expected
    assert [r.value for r in rows if r.event == "estimate"] == ["0", "3"]


def test_scripted_op_validation():
    with pytest.raises(ValueError):
        ScriptedOp(1.0, "delete")
    with pytest.raises(ValueError):
        ScriptedOp(-1.0, "query")


# --- aggregation from raw CSV ---


SAMPLE_LOG = """\
0,cache,GetValue,miss,
0,estimator,GetValue,estimate,5
0,client,GetValue,ok,
1000000000,cache,GetValue,hit,
1000000000,client,GetValue,ok,
2000000000,cache,GetValue,hit,
2000000000,client,GetValue,stale,
3000000000,client,SetValue,ok,
4000000000,client,GetValue,error,
"""


def test_aggregate_logs_hand_checked():
    metrics = aggregate_logs(SAMPLE_LOG)
    assert metrics.hits == 2 and metrics.misses == 1
    assert metrics.traffic_reduction == 2 / 3
    assert metrics.total_queries == 3  # the errored query is excluded
    assert metrics.stale_queries == 1
    assert metrics.errored_queries == 1
    assert metrics.error_fraction == 1 / 3


def test_aggregate_requires_signal():
    with pytest.raises(ValueError, match="no completed queries"):
        aggregate_rows([EventRow(0, "client", "GetValue", "error")])
    with pytest.raises(ValueError, match="no cache lookups"):
        aggregate_rows([EventRow(0, "client", "GetValue", "ok")])


# --- scatter and result files ---


def fake_result(config_id, phase, seed, tr, ef):
    return ExperimentResult(
        config_id=config_id,
        phase_tag=phase,
        seed=seed,
        duration_s=300.0,
        clock_mode="virtual",
        error_fraction=ef,
        traffic_reduction=tr,
        total_queries=100,
        stale_queries=int(ef * 100),
        errored_queries=0,
        total_updates=10,
        cache_stats=CacheStats(int(tr * 100), 100 - int(tr * 100), 5, 2),
        windows=(WindowStats(0.0, ef, tr, 1.0),),
    )


def test_scatter_lines_average_seeds_in_canonical_order():
    results = [
        fake_result("updaterisk-0.5", "0", 1, 0.2, 0.02),
        fake_result("static-1", "pi", 1, 0.8, 0.1),
        fake_result("updaterisk-0.5", "0", 2, 0.4, 0.04),
        fake_result("static-1", "0", 1, 0.9, 0.2),
    ]
    assert scatter_lines(results) == [
        "config_id,parameter,phase_shift,traffic_reduction,error_fraction",
        "static-1,1,0,0.900000,0.200000",
        "static-1,1,pi,0.800000,0.100000",
        "updaterisk-0.5,0.5,0,0.300000,0.030000",
    ]
    with pytest.raises(ValueError):
        scatter_lines([])


def test_result_json_roundtrip(tmp_path):
    result = fake_result("adaptive-0.25", "pi2", 3, 0.33, 0.01)
    write_result(result, tmp_path / "result.json")
    assert read_result(tmp_path / "result.json") == result
    data = json.loads((tmp_path / "result.json").read_text())
    assert data["phase"] == "pi2" and data["cache"]["hits"] == 33


def test_write_timeseries_format(tmp_path):
    windows = (WindowStats(0.0, 0.0, 0.5, 1.25), WindowStats(15.0, 0.1, 0.25, 0.0))
    write_timeseries(windows, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == (
        "window_start_s,hit_fraction,error_fraction,mean_ttl\n"
        "0,0.500000,0.000000,1.250000\n"
        "15,0.250000,0.100000,0.000000\n"
    )


# --- suites ---


def test_run_suite_layout_and_scatter(tmp_path):
    outcome = run_suite(
        ["dynamic-adaptive-0.5", "static-1"],
        phases=("0", "pi"),
        seeds=(1, 2),
        duration_s=5.0,
        out_dir=tmp_path,
    )
    assert len(outcome.results) == 8 and not outcome.failures
    for config in ("static-1", "adaptive-0.5"):
        for phase in ("0", "pi"):
            for seed in (1, 2):
                d = run_dir(tmp_path, config, phase, seed)
                assert (d / "events.csv").exists() and (d / "result.json").exists()
    lines = (tmp_path / "scatter.csv").read_text().splitlines()
    assert len(lines) == 1 + 4  # header + 2 configs x 2 phases
    assert lines[1].startswith("static-1,1,0,")  # canonical order, static first
    assert load_results(tmp_path)[0].config_id == "adaptive-0.5"  # path order


def test_run_suite_records_failures_and_keeps_going(tmp_path, monkeypatch):
    import meshcache.harness as harness

    real = harness.run_experiment

    def sometimes_broken(cfg, out_dir=None):
        if cfg.phase_tag == "pi":
            raise RuntimeError("induced")
        return real(cfg, out_dir)

    monkeypatch.setattr(harness, "run_experiment", sometimes_broken)
    outcome = harness.run_suite(
        ["static-1"], phases=("0", "pi"), seeds=(1,), duration_s=5.0, out_dir=tmp_path
    )
    assert len(outcome.results) == 1
    assert outcome.failures == (("static-1", "pi", 1, "RuntimeError: induced"),)
    assert (tmp_path / "scatter.csv").exists()  # written from the survivors
