"""Open-loop request injection and a pool of mutator threads serving it."""
from __future__ import annotations

import csv
import enum
import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

from .sched import SchedPolicy, ThreadKind, ThreadState


class WorkloadConfigError(ValueError):
    pass


@dataclass
class RequestSpec:
    service_micros: int = 4_000
    service_jitter: float = 0.5
    alloc_bytes: int = 100_000

    def __post_init__(self):
        if self.service_micros < 1:
            raise WorkloadConfigError("service_micros must be >= 1")
        if not 0.0 <= self.service_jitter < 1.0:
            raise WorkloadConfigError("service_jitter must lie in [0, 1)")
        if self.alloc_bytes < 1:
            raise WorkloadConfigError("alloc_bytes must be >= 1")

    def sample(self, rng: random.Random) -> int:
        if self.service_jitter == 0.0:
            return self.service_micros
        j = self.service_jitter * self.service_micros
        return max(1, round(rng.uniform(self.service_micros - j, self.service_micros + j)))


class ArrivalKind(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    POISSON = "poisson"
    ON_OFF = "on-off"


@dataclass
class ArrivalProcess:
    kind: ArrivalKind = ArrivalKind.POISSON
    rate: float = 1000.0
    seed: int = 0
    burst_rate: float = 0.0
    period_us: int = 100_000
    duty: float = 0.5

    def __post_init__(self):
        self.kind = ArrivalKind(self.kind)
        self.rate = float(self.rate)
        self.burst_rate = float(self.burst_rate)
        if self.kind is ArrivalKind.ON_OFF:
            if self.rate < 0 or self.burst_rate <= 0:
                raise WorkloadConfigError("on-off needs base rate >= 0 and burst rate > 0")
            if not 0.0 < self.duty < 1.0:
                raise WorkloadConfigError("duty fraction must lie in (0, 1)")
            if self.period_us <= 0:
                raise WorkloadConfigError("period_us must be positive")
        elif not self.rate > 0:
            raise WorkloadConfigError("arrival rate must be positive")


def _poisson_times(rng: random.Random, rate: float, lo: int, hi: int) -> Iterator[int]:
    if rate <= 0:
        return
    per_us = rate / 1e6
    t = float(lo)
    while True:
        t += rng.expovariate(per_us)
        if t >= hi:
            return
        yield int(t)


def iter_arrivals(process: ArrivalProcess, horizon: int, start: int = 0) -> Iterator[int]:
    """Lazily yield strictly increasing arrival times in ``[start, horizon)``."""
    rng = random.Random(f"arrivals:{process.seed}:{process.kind.value}:{process.rate}:{start}")
    last = start - 1
    if process.kind is ArrivalKind.DETERMINISTIC:
        gap = 1e6 / process.rate
        raw = (start + round(i * gap) for i in range(math.ceil((horizon - start) / gap) + 1))
    elif process.kind is ArrivalKind.POISSON:
        raw = _poisson_times(rng, process.rate, start, horizon)
    else:
        raw = _on_off_times(rng, process, start, horizon)
    for t in raw:
        if t >= horizon:
            return
        if t <= last:
            t = last + 1
            if t >= horizon:
                return
        last = t
        yield t


def _on_off_times(rng, p: ArrivalProcess, lo: int, hi: int):
    k = lo // p.period_us
    on_len = round(p.period_us * p.duty)
    while k * p.period_us < hi:
        base = k * p.period_us
        on_lo, on_hi = max(lo, base), min(hi, base + on_len)
        if on_lo < on_hi:
            yield from _poisson_times(rng, p.burst_rate, on_lo, on_hi)
        off_lo, off_hi = max(lo, base + on_len), min(hi, base + p.period_us)
        if off_lo < off_hi:
            yield from _poisson_times(rng, p.rate, off_lo, off_hi)
        k += 1


def generate_arrivals(process: ArrivalProcess, horizon: int) -> list[int]:
    if horizon <= 0:
        raise WorkloadConfigError("horizon must be positive")
    return list(iter_arrivals(process, horizon))


@dataclass
class RateStep:
    start_us: int
    end_us: int
    rate: float


def schedule_arrivals(steps: Iterable[RateStep], kind: ArrivalKind, seed: int) -> Iterator[int]:
    """Concatenate arrival streams over a piecewise-constant rate schedule."""
    last = -1
    for i, s in enumerate(steps):
        if s.rate <= 0:
            continue
        proc = ArrivalProcess(kind=kind, rate=s.rate, seed=seed * 1000 + i)
        for t in iter_arrivals(proc, s.end_us, s.start_us):
            if t > last:
                last = t
                yield t


class RequestRecord:
    __slots__ = ("arrival", "start", "completion", "stalled_micros", "lock_wait_micros", "service")

    def __init__(self, arrival: int):
        self.arrival = arrival
        self.start = None
        self.completion = None
        self.stalled_micros = 0
        self.lock_wait_micros = 0
        self.service = 0

    @property
    def latency(self) -> int | None:
        return None if self.completion is None else self.completion - self.arrival

    def __repr__(self):
        return (f"RequestRecord(arrival={self.arrival}, start={self.start}, "
                f"completion={self.completion}, stalled={self.stalled_micros})")


class MutatorPool:
    """FIFO dispatch of arriving requests onto a fixed set of mutator threads."""

    def __init__(self, sim, size: int, spec: RequestSpec, rng: random.Random):
        if size < 1:
            raise WorkloadConfigError("pool size must be >= 1")
        self.sim = sim
        self.sched = sim.sched
        self.loop = sim.loop
        self.spec = spec
        self.rng = rng
        self.threads = [sim.sched.spawn(ThreadKind.MUTATOR, SchedPolicy.NORMAL) for _ in range(size)]
        self.free = deque(self.threads)
        self.queue: deque = deque()
        self.records: list[RequestRecord] = []
        self.completed: list[RequestRecord] = []
        self.paused = False
        self._parked: list = []
        self._arrivals: Iterator[int] | None = None

    def feed(self, arrivals: Iterable[int]) -> None:
        self._arrivals = iter(arrivals)
        self._schedule_next()

    def _schedule_next(self):
        t = next(self._arrivals, None)
        if t is not None:
            self.loop.at(t, self._on_arrival)

    def _on_arrival(self, _):
        rec = RequestRecord(self.loop.now)
        self.records.append(rec)
        self._schedule_next()
        if self.free and not self.paused and not self.queue:
            self._start(self.free.popleft(), rec)
        else:
            self.queue.append(rec)

    def _start(self, m, rec):
        rec.start = self.loop.now
        m.tag = rec
        if self.sim.allocate(m, self.spec.alloc_bytes):
            self._serve(m)
        else:
            self.sched.block(m, ThreadState.BLOCKED)

    def _serve(self, m):
        rec = m.tag
        rec.service = self.spec.sample(self.rng)
        if self.paused:
            m.pending_work = rec.service
            m.on_done = self._finish
            if m.state is ThreadState.RUNNING or m.state is ThreadState.RUNNABLE:
                self.sched.block(m, ThreadState.BLOCKED)
            m.state = ThreadState.BLOCKED
            self._parked.append(m)
        else:
            self.sched.run_burst(m, rec.service, self._finish)

    def allocation_done(self, m, stall_us: int = 0, lock_us: int = 0):
        rec = m.tag
        rec.stalled_micros += stall_us
        rec.lock_wait_micros += lock_us
        self._serve(m)

    def note_lock_wait(self, m, lock_us: int):
        m.tag.lock_wait_micros += lock_us

    def _finish(self, m):
        rec = m.tag
        rec.completion = self.loop.now
        self.completed.append(rec)
        m.tag = None
        if self.queue and not self.paused:
            self._start(m, self.queue.popleft())
        else:
            self.sched.block(m, ThreadState.SLEEPING)
            self.free.append(m)

    # -- stop-the-world ---------------------------------------------------

    def pause(self):
        self.paused = True
        for m in self.threads:
            if m.state is ThreadState.RUNNING or m.state is ThreadState.RUNNABLE:
                self.sched.block(m, ThreadState.BLOCKED)
                self._parked.append(m)

    def resume(self):
        self.paused = False
        parked, self._parked = self._parked, []
        for m in parked:
            self.sched.wake(m)
        while self.queue and self.free:
            self._start(self.free.popleft(), self.queue.popleft())

    def backlog(self) -> int:
        return len(self.queue)


def write_requests_csv(path, records: Iterable[RequestRecord], header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["arrival_us", "start_us", "completion_us", "stall_us", "lock_wait_us"])
        for r in records:
            w.writerow([r.arrival, "" if r.start is None else r.start,
                        "" if r.completion is None else r.completion,
                        r.stalled_micros, r.lock_wait_micros])
