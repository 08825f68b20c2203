import csv
from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from streamfn.bench import (
    COLUMNS,
    BenchReport,
    FaasHost,
    InvalidTimestampsError,
    ModeConfig,
    PlatformTarget,
    RunInvalidError,
    RunTimestamps,
    UndefinedMetricError,
    WorkloadSpec,
    bench_deployment,
    compute_overhead,
    compute_theta,
    generate_stream,
    read_report,
    run_mode,
    write_report,
)
from streamfn.bench.report import latency_path
from streamfn.control import serve
from streamfn.events import make_event

SMALL = dict(width=16, height=12)


# workload --------------------------------------------------------------

def test_one_second_at_ten_fps():
    sent = []
    log = generate_stream(WorkloadSpec(duration_s=1, **SMALL), sent.append)
    assert len(sent) == 10 == log.frames_sent
    assert [e.seq for e in sent] == list(range(10))
    assert log.t0_ns == sent[0].ts
    gaps = [(b - a) / 1e9 for a, b in zip(log.send_ns, log.send_ns[1:])]
    assert all(0.08 < g < 0.12 for g in gaps)


def test_pool_cycles():
    spec = WorkloadSpec(fps=1000, duration_s=0.1, distinct_frames=20, **SMALL)
    pool = spec.frame_pool()
    assert len(set(pool)) == 20
    sent = []
    generate_stream(spec, sent.append, pool)
    assert len(sent) == 100
    assert all(e.payload == pool[i % 20] for i, e in enumerate(sent))


def test_pool_deterministic():
    a = WorkloadSpec(rng_seed=5).frame_pool()
    assert a == WorkloadSpec(rng_seed=5).frame_pool()
    assert a != WorkloadSpec(rng_seed=6).frame_pool()
    assert all(len(f) == 160 * 120 * 3 for f in a)


def test_pacing_drift_recorded():
    import time

    def slow_sink(event):
        if event.seq == 1:
            time.sleep(0.25)

    log = generate_stream(WorkloadSpec(fps=20, duration_s=0.25, **SMALL), slow_sink)
    assert log.late_frames >= 1
    assert log.max_drift_s > 0.15


def test_workload_validation():
    with pytest.raises(ValueError):
        WorkloadSpec(fps=0)
    with pytest.raises(ValueError):
        WorkloadSpec(distinct_frames=0)
    with pytest.raises(ValueError):
        WorkloadSpec(width=1, height=1, distinct_frames=2**24 + 1).frame_pool()


# metrics ---------------------------------------------------------------

def test_theta_examples():
    assert compute_theta(RunTimestamps.from_seconds(0, 0, 10)) == 0.0
    assert compute_theta(RunTimestamps.from_seconds(0, 10, 10.1)) == pytest.approx(10 / 10.1, rel=1e-12)
    # a two-minute cold start in front of a 10 s stream dominates the run
    ts = RunTimestamps.from_seconds(0, 117.584, 117.584 + 10 + 0.2)
    theta = compute_theta(ts)
    assert theta == pytest.approx(float(Fraction(ts.t1 - ts.t0, ts.t2 - ts.t0)), rel=1e-12)
    assert 0.9 < theta < 1.0


def test_theta_errors():
    with pytest.raises(UndefinedMetricError):
        compute_theta(RunTimestamps(5, 5, 5))
    with pytest.raises(InvalidTimestampsError):
        compute_theta(RunTimestamps(0, 11, 10))
    with pytest.raises(InvalidTimestampsError):
        compute_overhead(RunTimestamps(3, 1, 10), 1.0)


def test_overhead_examples():
    assert compute_overhead(RunTimestamps.from_seconds(0, 0, 10.005), 10) == pytest.approx(0.005, abs=1e-9)
    assert compute_overhead(RunTimestamps.from_seconds(0, 1, 10), 10) == 0
    # engine emulation closed form: c - L + p
    c, L, p = 118.0, 10.0, 0.01
    assert compute_overhead(RunTimestamps.from_seconds(0, c, c + p), L) == pytest.approx(c - L + p)


ns = st.integers(0, 10**12)


@given(ns, ns, ns)
def test_theta_bounds_and_extremes(a, b, c):
    t0, t1, t2 = sorted((a, b, c))
    assume(t2 > t0)
    theta = compute_theta(RunTimestamps(t0, t1, t2))
    assert 0.0 <= theta <= 1.0
    assert (theta == 0.0) == (t1 == t0)
    assert (theta == 1.0) == (t1 == t2)
    assert theta == pytest.approx(float(Fraction(t1 - t0, t2 - t0)), rel=1e-12)


@given(st.integers(1, 10**11), st.integers(0, 10**11), st.integers(1, 10**11))
def test_theta_strictly_decreases_with_duration(cold, rest, extra):
    a = compute_theta(RunTimestamps(0, cold, cold + rest))
    b = compute_theta(RunTimestamps(0, cold, cold + rest + extra))
    assert b < a


# modes -----------------------------------------------------------------

def test_mode_aliases():
    assert ModeConfig("faas").mode == "faas_per_event"
    assert ModeConfig("engine").mode == "engine_emulated"
    with pytest.raises(ValueError):
        ModeConfig("nope")
    with pytest.raises(ValueError):
        ModeConfig("engine", injected_cold_start_s=-1)


@pytest.mark.parametrize("mode", ["stream_fn", "faas_per_event", "batch"])
def test_short_runs(mode):
    spec = WorkloadSpec(duration_s=1, **SMALL)
    rep = run_mode(ModeConfig(mode), spec, isolation="in-process")
    assert rep.frames_processed == rep.frames_sent == 10
    ts = rep.timestamps
    assert ts.t0 <= ts.t1 <= ts.t2
    assert rep.theta == compute_theta(ts)
    assert rep.overhead_s == compute_overhead(ts, spec.generation_s)
    assert rep.overhead_s > -0.002
    if mode == "batch":
        assert rep.theta > 0.8
    else:
        assert rep.theta < 0.2


def test_engine_emulation_closed_form():
    c = 2.0
    spec = WorkloadSpec(duration_s=1, **SMALL)
    rep = run_mode(ModeConfig("engine", injected_cold_start_s=c), spec, isolation="in-process")
    expected = c - spec.generation_s
    assert rep.overhead_s == pytest.approx(expected, rel=0.15)
    assert rep.theta > 0.9


def test_external_platform_target():
    spec = WorkloadSpec(duration_s=0.5, **SMALL)
    with serve(bench_deployment(spec, 0.2, "in-process")) as p:
        target = PlatformTarget(p.address, p.stats_address)
        rep = run_mode(ModeConfig("stream_fn"), spec, target)
        eng = run_mode(ModeConfig("engine", injected_cold_start_s=0.2), spec, target)
        assert p.stats().total_streams_completed == 2
    assert rep.frames_processed == eng.frames_processed == 5
    assert eng.timestamps.t1 - eng.timestamps.t0 >= 0.2e9


def test_faas_single_concurrency_and_fresh_functions():
    created = []
    from streamfn.sdk import FunctionRegistry, identity_fn

    reg = FunctionRegistry()

    def factory(**_):
        fn = identity_fn()
        created.append(fn)
        return fn

    reg.register("grayscale", factory)
    host = FaasHost(reg, "grayscale", {})
    for i in range(3):
        host.invoke(make_event([("seq", i)], b""))
    # one construction during startup plus one per invocation
    assert len(created) == 4 and len({id(f) for f in created}) == 4
    assert host.invocations == 3


def test_lost_frames_invalidate_run():
    from streamfn.bench.modes import _report
    from streamfn.bench.workload import GenerationLog

    gen = GenerationLog(t0_ns=0, send_ns=[0, 1, 2])
    with pytest.raises(RunInvalidError):
        _report("stream_fn", WorkloadSpec(), gen, 1, 5, 2, [])


# report ----------------------------------------------------------------

def fake_report(mode="stream_fn", duration=10.0, t=(0, 30_000_000, 9_905_000_000)):
    ts = RunTimestamps(*t)
    spec = WorkloadSpec(duration_s=duration)
    return BenchReport(mode, spec, ts, compute_theta(ts), compute_overhead(ts, spec.generation_s), 100, 100,
                       latency={"p50_ms": 1.0, "p90_ms": 2.0, "p99_ms": 3.0, "max_ms": 4.0})


def test_write_one_report(tmp_path):
    path = write_report([fake_report()], tmp_path / "r.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == COLUMNS
    assert len(rows) == 2
    side = latency_path(path)
    assert side.exists() and len(side.read_text().splitlines()) == 2


def test_theta_recomputable_from_csv(tmp_path):
    rep = fake_report(t=(1_700_000_000_123_456_789, 1_700_000_000_223_456_789, 1_700_000_010_123_000_001))
    path = write_report([rep], tmp_path / "r.csv")
    row = read_report(path)[0]
    theta = (row["t1_ns"] - row["t0_ns"]) / (row["t2_ns"] - row["t0_ns"])
    assert abs(theta - row["theta"]) <= 1e-9


def test_twelve_run_grid(tmp_path):
    reports = [fake_report(m, d) for m in ("stream_fn", "faas_per_event", "batch", "engine_emulated")
               for d in (10.0, 30.0, 60.0)]
    rows = read_report(write_report(reports, tmp_path / "grid.csv"))
    assert len(rows) == 12
    assert {(r["mode"], r["duration_s"]) for r in rows} == {(r.mode, r.workload.duration_s) for r in reports}


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_report([fake_report()], tmp_path / "missing" / "r.csv")


def test_cli_bench(tmp_path, capsys):
    from streamfn.cli import main

    out = tmp_path / "cli.csv"
    code = main(["bench", "--mode", "stream_fn", "batch", "--duration", "0.5", "--width", "8", "--height", "8",
                 "--isolation", "in-process", "--out", str(out)])
    assert code == 0
    rows = read_report(out)
    assert [r["mode"] for r in rows] == ["stream_fn", "batch"]
    assert "theta=" in capsys.readouterr().out


def test_cli_bench_platform_needs_stats(tmp_path):
    from streamfn.cli import main

    assert main(["bench", "--platform", "127.0.0.1:9", "--out", str(tmp_path / "x.csv")]) == 2
