import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from monksim.config import ScenarioConfig
from monksim.sim import Simulation
from monksim.workload import (
    ArrivalKind, ArrivalProcess, RateStep, RequestSpec, WorkloadConfigError, generate_arrivals, iter_arrivals,
    schedule_arrivals,
)


def served(arrivals, cores=1, pool=1, service=5_000, jitter=0.0, horizon=None, trace=False):
    cfg = ScenarioConfig(cores=cores, pool_size=pool, horizon_us=horizon or 10**9, settle_us=0,
                         request=RequestSpec(service, jitter, 1))
    sim = Simulation(cfg, 0, gc_enabled=False, trace=trace)
    return sim, sim.run(arrivals=arrivals)


def lindley(arrivals, service):
    """Completion times of a single FIFO server with constant service."""
    out, free = [], 0
    for a in arrivals:
        free = max(a, free) + service
        out.append(free)
    return out


# -- arrivals -----------------------------------------------------------------------

def test_deterministic_thousand_per_second():
    ts = generate_arrivals(ArrivalProcess("deterministic", 1000.0), 1_000_000)
    assert len(ts) == 1000
    assert ts == [i * 1000 for i in range(1000)]


def test_poisson_count_within_three_sigma():
    n = sum(1 for _ in iter_arrivals(ArrivalProcess("poisson", 1000.0, seed=3), 100_000_000))
    assert abs(n - 100_000) <= 3 * math.sqrt(100_000)


def test_on_off_arrivals_fall_inside_bursts():
    p = ArrivalProcess("on-off", 0.0, seed=1, burst_rate=2000.0, period_us=100_000, duty=0.5)
    ts = generate_arrivals(p, 1_000_000)
    assert abs(len(ts) - 1000) <= 3 * math.sqrt(1000)
    assert all(t % 100_000 < 50_000 for t in ts)


@given(st.sampled_from(list(ArrivalKind)), st.floats(10, 5000), st.integers(0, 10**6),
       st.integers(1, 2_000_000))
@settings(max_examples=60, deadline=None)
def test_arrivals_are_strictly_increasing_bounded_and_seeded(kind, rate, seed, horizon):
    p = ArrivalProcess(kind, rate, seed, burst_rate=2 * rate)
    ts = generate_arrivals(p, horizon)
    assert all(0 <= t < horizon for t in ts)
    assert all(a < b for a, b in zip(ts, ts[1:]))
    assert ts == generate_arrivals(ArrivalProcess(kind, rate, seed, burst_rate=2 * rate), horizon)


@pytest.mark.parametrize("kw", [dict(rate=0.0), dict(rate=-5.0),
                                dict(kind="on-off", burst_rate=10.0, duty=1.0),
                                dict(kind="on-off", burst_rate=0.0)])
def test_bad_arrival_configs_rejected(kw):
    with pytest.raises(WorkloadConfigError):
        ArrivalProcess(**kw)


def test_nonpositive_horizon_rejected():
    with pytest.raises(WorkloadConfigError):
        generate_arrivals(ArrivalProcess(), 0)


def test_rate_schedule_respects_step_bounds():
    steps = [RateStep(0, 500_000, 1000.0), RateStep(500_000, 1_000_000, 0.0), RateStep(1_000_000, 1_500_000, 4000.0)]
    ts = list(schedule_arrivals(steps, ArrivalKind.DETERMINISTIC, 0))
    assert sum(t < 500_000 for t in ts) == 500
    assert not any(500_000 <= t < 1_000_000 for t in ts)
    assert sum(t >= 1_000_000 for t in ts) == 2000


@given(st.integers(1, 10**6), st.floats(0, 0.99), st.integers(0, 10**6))
def test_service_samples_are_positive_and_bounded(mean, jitter, seed):
    spec = RequestSpec(mean, jitter, 1)
    rng = random.Random(seed)
    for _ in range(20):
        s = spec.sample(rng)
        assert s >= 1
        assert mean * (1 - jitter) - 1 <= s <= mean * (1 + jitter) + 1


# -- serving --------------------------------------------------------------------------

def test_single_request_on_empty_machine():
    _, res = served([0])
    assert [r.latency for r in res.records] == [5000]


def test_two_simultaneous_requests_serialize():
    _, res = served([0, 0], horizon=100_000)
    assert sorted(r.latency for r in res.records) == [5000, 10_000]


def test_matches_single_server_queue_replay():
    arrivals = sorted(random.Random(4).sample(range(200_000), 60))
    _, res = served(arrivals, horizon=10**6)
    assert [r.completion for r in res.records] == lindley(arrivals, 5000)


def test_overload_queue_grows_monotonically():
    arrivals = list(range(0, 1_000_000, 2500))  # 400 req/s against 200 req/s of capacity
    cfg = ScenarioConfig(cores=1, pool_size=1, horizon_us=1_000_000, settle_us=0, request=RequestSpec(5000, 0.0, 1))
    sim = Simulation(cfg, 0, gc_enabled=False)
    lengths = []
    for t in range(100_000, 1_000_000, 100_000):
        sim.loop.at(t, lambda _: lengths.append(sim.pool.backlog()))
    res = sim.run(arrivals=arrivals)
    assert all(a < b for a, b in zip(lengths, lengths[1:]))
    # replay: requests done by t are those whose Lindley completion is <= t
    done = lindley(arrivals, 5000)
    for k, t in enumerate(range(100_000, 1_000_000, 100_000)):
        arrived = sum(a <= t for a in arrivals)
        started = sum(1 for c in done if c - 5000 <= t)
        assert lengths[k] == arrived - started
    assert res.backlog > lengths[-1]


@given(st.lists(st.integers(0, 300_000), min_size=1, max_size=80), st.integers(1, 4), st.integers(1, 6),
       st.floats(0, 0.9))
@settings(max_examples=40, deadline=None)
def test_fifo_start_and_record_invariants(raw, cores, pool, jitter):
    arrivals = sorted(set(raw))
    _, res = served(arrivals, cores, pool, 3000, jitter, horizon=2_000_000)
    starts = [r.start for r in res.records]
    assert all(s is not None for s in starts)
    assert starts == sorted(starts)
    for r in res.records:
        assert r.arrival <= r.start <= r.completion
        assert r.completion - r.start >= r.service + r.stalled_micros


@given(st.lists(st.integers(0, 200_000), min_size=1, max_size=60), st.integers(1, 3), st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_latency_decomposes_into_queueing_and_cpu_and_waiting(raw, cores, pool):
    arrivals = sorted(set(raw))
    sim, res = served(arrivals, cores, pool, 2000, 0.5, horizon=2_000_000, trace=True)
    # replay the trace to recover each thread's running and runnable time
    running, waiting = {}, {}
    state, since = {}, {}
    for now, event, tid, core, detail in res.trace:
        prev = state.get(tid)
        if prev == "run":
            running[tid] = running.get(tid, 0) + now - since[tid]
        elif prev == "ready":
            waiting[tid] = waiting.get(tid, 0) + now - since[tid]
        if event == "run":
            state[tid] = "run"
        elif event in ("preempt", "wake"):
            state[tid] = "ready"
        else:
            state[tid] = None
        since[tid] = now
    total_service = sum(r.service for r in res.records)
    assert sum(running.values()) == total_service
    queueing = sum(r.start - r.arrival for r in res.records)
    latency = sum(r.latency for r in res.records)
    assert latency == queueing + total_service + sum(waiting.values())


@given(st.integers(1, 4), st.integers(1, 8), st.floats(200, 6000), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_throughput_ceiling_over_one_second_windows(cores, pool, rate, seed):
    service, jitter = 2000, 0.5
    ts = generate_arrivals(ArrivalProcess("poisson", rate, seed), 3_000_000)
    _, res = served(ts, cores, pool, service, jitter, horizon=3_000_000)
    fastest = service * (1 - jitter)
    ceiling = pool * (1e6 / fastest) * min(1.0, cores / pool)
    for lo in range(0, 2_000_001, 250_000):
        done = sum(1 for r in res.records if r.completion is not None and lo <= r.completion < lo + 1_000_000)
        assert done <= ceiling + 1
