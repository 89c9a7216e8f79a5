"""Heap, allocation stalls and a concurrent collector in the style of ZGC.

The pure functions (``predict_alloc_rate``, ``predict_cycle_duration``,
``decide_gc_start``, ``max_workers``) implement the director heuristics.
``GcEngine`` drives cycles inside a running :class:`~monksim.sim.Simulation`.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from statistics import fmean, pstdev
from typing import NamedTuple

from .sched import SchedPolicy, ThreadKind, ThreadState


class GcConfigError(ValueError):
    pass


@dataclass
class GcConfig:
    enabled: bool = True
    heap_capacity: int = 300_000_000
    live_fraction: float = 0.3
    # bytes of live data one worker traces per microsecond of CPU
    worker_throughput: float = 90.0
    cycle_overhead_us: int = 2_000
    safepoint_us: int = 500
    locks_per_cycle: float = 5.0
    lock_hold_us: int = 200
    k_conservative: float = 1.0
    start_margin: float = 0.1
    headroom_factor: float = 1.0
    director_interval_us: int = 100_000
    alloc_window_us: int = 1_000_000
    alloc_subintervals: int = 10
    bootstrap_alloc_rate: float = 50_000_000.0
    # None: assume a full heap (overhead + live share of capacity)
    bootstrap_cycle_work_us: float | None = None
    bootstrap_worker_speed: float = 1.0
    history_decay: float = 0.7
    history_len: int = 16
    max_workers: int | None = None

    def validate(self):
        if self.heap_capacity <= 0:
            raise GcConfigError("heap_capacity must be positive")
        if not 0.0 <= self.live_fraction <= 1.0:
            raise GcConfigError("live_fraction must lie in [0, 1]")
        if self.worker_throughput <= 0:
            raise GcConfigError("worker_throughput must be positive")
        if self.k_conservative < 0 or self.start_margin < 0 or self.headroom_factor < 0:
            raise GcConfigError("director constants must be nonnegative")
        if not 0.0 < self.history_decay <= 1.0:
            raise GcConfigError("history_decay must lie in (0, 1]")


def max_workers(cores: int) -> int:
    """Worker cap: a quarter of the cores, rounded up."""
    if cores < 1:
        raise GcConfigError("cores must be >= 1")
    return -(-cores // 4)


@dataclass
class Heap:
    capacity: int
    used: int = 0
    live_fraction: float = 0.3

    @property
    def free(self) -> int:
        return self.capacity - self.used


class AllocationTracker:
    """Sliding window of (time_us, bytes) allocation samples."""

    def __init__(self, window_span: int = 1_000_000, origin: int = 0):
        self.window_span = window_span
        self.origin = origin
        self.window: deque = deque()

    def add(self, now: int, nbytes: int) -> None:
        self.window.append((now, nbytes))
        self._trim(now)

    def _trim(self, now: int) -> None:
        lo = now - self.window_span
        w = self.window
        while w and w[0][0] < lo:
            w.popleft()

    def subinterval_rates(self, now: int, parts: int) -> list[float]:
        """Bytes/s in ``parts`` equal slices of the window ending at ``now``."""
        self._trim(now)
        lo = max(self.origin, now - self.window_span)
        span = now - lo
        if span <= 0 or not self.window:
            return []
        width = span / parts
        sums = [0] * parts
        for t, b in self.window:
            if t < lo:
                continue
            i = min(parts - 1, int((t - lo) / width))
            sums[i] += b
        return [s * 1e6 / width for s in sums]


def predict_alloc_rate(tracker: AllocationTracker, now: int, k_conservative: float = 1.0,
                       parts: int = 10, bootstrap: float = 50e6) -> float:
    """Mean allocation rate over the window plus ``k`` standard deviations."""
    rates = tracker.subinterval_rates(now, parts)
    if not rates:
        return bootstrap
    return fmean(rates) + k_conservative * pstdev(rates)


class CycleRecord(NamedTuple):
    workers: int
    duration: float
    work: float
    used: int = 0


@dataclass
class DirectorState:
    max_workers: int
    predicted_alloc_rate: float = 0.0
    cycle_history: list = field(default_factory=list)
    decay: float = 0.7
    history_len: int = 16
    bootstrap_work: float = 100_000.0
    bootstrap_speed: float = 1.0
    # heap bytes in use right now; when set, work is predicted per used byte
    occupancy: int | None = None

    @property
    def predicted_cycle_duration(self) -> dict[int, float]:
        return {w: predict_cycle_duration(self, w) for w in range(1, self.max_workers + 1)}

    def record(self, workers: int, duration: float, work: float, used: int = 0) -> None:
        self.cycle_history.append(CycleRecord(workers, duration, work, used))
        if len(self.cycle_history) > self.history_len:
            del self.cycle_history[0]


def decayed_mean(values, decay: float) -> float:
    """Exponentially weighted mean; the last value carries weight 1."""
    num = den = 0.0
    w = 1.0
    for v in reversed(values):
        num += w * v
        den += w
        w *= decay
    return num / den


def predict_cycle_duration(state: DirectorState, workers: int) -> float:
    """Expected wall duration of the next cycle when run by ``workers`` threads."""
    if not 1 <= workers <= state.max_workers:
        raise GcConfigError(f"workers must lie in [1, {state.max_workers}]")
    hist = state.cycle_history
    if not hist:
        return state.bootstrap_work / (workers * state.bootstrap_speed)
    if state.occupancy is not None and all(h.used > 0 for h in hist):
        work = decayed_mean([h.work / h.used for h in hist], state.decay) * state.occupancy
    else:
        work = decayed_mean([h.work for h in hist], state.decay)
    # cycles that found nothing to mark say nothing about worker speed
    timed = [h.work / (h.workers * h.duration) for h in hist if h.work > 0]
    speed = decayed_mean(timed, state.decay) if timed else state.bootstrap_speed
    return work / (workers * speed)


class StartDecision(NamedTuple):
    start: bool
    workers: int = 0
    pressing: bool = False
    time_to_oom: float = math.inf


def decide_gc_start(state: DirectorState, heap: Heap, now: int = 0, margin: float = 0.1,
                    headroom_factor: float = 1.0) -> StartDecision:
    """Start a cycle only when waiting longer would risk running out of memory.

    Picks the fewest workers whose predicted duration (plus ``margin``) fits
    before the heap fills at the predicted allocation rate.
    """
    rate = state.predicted_alloc_rate
    tto = math.inf if rate <= 0 else max(0, heap.free) / rate * 1e6
    if predict_cycle_duration(state, 1) * (1.0 + headroom_factor) <= tto:
        return StartDecision(False, 0, False, tto)
    top = state.max_workers
    for w in range(1, top + 1):
        if predict_cycle_duration(state, w) * (1.0 + margin) <= tto:
            return StartDecision(True, w, w == top, tto)
    return StartDecision(True, top, True, tto)


@dataclass
class GcCycle:
    id: int
    workers: int
    total_work: int
    remaining_work: int
    start_us: int
    used_at_start: int
    pressing: bool = False
    phase: str = "idle"
    safepoint_schedule: list = field(default_factory=list)
    lock_schedule: list = field(default_factory=list)
    end_us: int | None = None
    reclaimed_bytes: int = 0
    stalls_during_cycle: int = 0
    shares: list = field(default_factory=list)


class _WorkerPlan:
    __slots__ = ("pos", "milestones", "share")

    def __init__(self, share, milestones):
        self.pos = 0
        self.share = share
        self.milestones = milestones


class GcEngine:
    """Runs collection cycles, allocation stalls and the director loop."""

    def __init__(self, sim, cfg: GcConfig, cores: int, rng):
        cfg.validate()
        self.sim = sim
        self.loop = sim.loop
        self.sched = sim.sched
        self.cfg = cfg
        self.rng = rng
        self.heap = Heap(cfg.heap_capacity, 0, cfg.live_fraction)
        self.tracker = AllocationTracker(cfg.alloc_window_us)
        top = cfg.max_workers or max_workers(cores)
        self.director = DirectorState(
            max_workers=top, decay=cfg.history_decay, history_len=cfg.history_len,
            bootstrap_work=cfg.bootstrap_cycle_work_us or (
                cfg.cycle_overhead_us + cfg.live_fraction * cfg.heap_capacity / cfg.worker_throughput),
            bootstrap_speed=cfg.bootstrap_worker_speed,
        )
        self.workers = []
        self.director_thread = None
        self.cycle: GcCycle | None = None
        self.cycles: list[GcCycle] = []
        self.stall_queue: deque = deque()
        self.lock_waiters: list = []
        self.lock_depth = 0
        self.stw_depth = 0
        self.stalls = 0
        self.lock_blocks = 0
        self.memory_log: list = []
        self._plans: dict = {}
        self._done_workers = 0
        self._next_id = 0

    def spawn_threads(self, policy: SchedPolicy):
        for _ in range(self.director.max_workers):
            self.workers.append(self.sched.spawn(ThreadKind.GC_WORKER, policy))
        self.director_thread = self.sched.spawn(ThreadKind.DIRECTOR, SchedPolicy.NORMAL)

    def start(self):
        self.loop.after(self.cfg.director_interval_us, self._tick)

    # -- allocation -------------------------------------------------------

    def allocate(self, thread, nbytes: int) -> bool:
        """Return True when the allocation completes now; otherwise ``thread`` waits.

        A waiting thread is resumed through ``sim.allocation_done``.
        """
        heap = self.heap
        if nbytes > heap.capacity:
            raise GcConfigError(f"allocation of {nbytes} bytes exceeds heap capacity")
        now = self.loop.now
        if self.lock_depth:
            self.lock_blocks += 1
            self.lock_waiters.append((thread, nbytes, now))
            return False
        if self.stall_queue or heap.used + nbytes > heap.capacity:
            self._stall(thread, nbytes, now)
            return False
        heap.used += nbytes
        self.tracker.add(now, nbytes)
        return True

    def _stall(self, thread, nbytes, since):
        self.stalls += 1
        if self.cycle is not None:
            self.cycle.stalls_during_cycle += 1
        self.stall_queue.append((thread, nbytes, since))
        if self.cycle is None:
            self.loop.after(0, self._stall_trigger)

    def _stall_trigger(self, _):
        if self.cycle is None:
            self.evaluate()

    def _drain_stalls(self):
        heap = self.heap
        q = self.stall_queue
        now = self.loop.now
        while q and heap.used + q[0][1] <= heap.capacity:
            thread, nbytes, since = q.popleft()
            heap.used += nbytes
            self.tracker.add(now, nbytes)
            self.sim.allocation_done(thread, stall_us=now - since)

    # -- director ---------------------------------------------------------

    def _tick(self, _):
        if self.cycle is None:
            self.evaluate()
        self.loop.after(self.cfg.director_interval_us, self._tick)

    def evaluate(self):
        cfg = self.cfg
        now = self.loop.now
        self.sim.on_director_decision_point()
        state = self.director
        state.occupancy = self.heap.used
        state.predicted_alloc_rate = predict_alloc_rate(
            self.tracker, now, cfg.k_conservative, cfg.alloc_subintervals, cfg.bootstrap_alloc_rate
        )
        decision = decide_gc_start(state, self.heap, now, cfg.start_margin, cfg.headroom_factor)
        if decision.start:
            self.sim.on_gc_start_decision(decision)
            self.start_cycle(decision.workers, decision.pressing)
        return decision

    # -- cycles -----------------------------------------------------------

    def start_cycle(self, workers: int, pressing: bool = False) -> GcCycle:
        if self.cycle is not None:
            raise RuntimeError("cycles may not overlap")
        cfg = self.cfg
        now = self.loop.now
        used0 = self.heap.used
        live = int(used0 * cfg.live_fraction)
        total = cfg.cycle_overhead_us + math.ceil(live / cfg.worker_throughput)
        self._next_id += 1
        base, extra = divmod(total, workers)
        shares = [base + (1 if i < extra else 0) for i in range(workers)]
        locks = self._lock_schedule(shares)
        cyc = GcCycle(
            id=self._next_id, workers=workers, total_work=total, remaining_work=total,
            start_us=now, used_at_start=used0, pressing=pressing, phase="marking",
            safepoint_schedule=[(0, cfg.safepoint_us), (None, cfg.safepoint_us)],
            lock_schedule=locks, shares=shares,
        )
        self.cycle = cyc
        self._done_workers = 0
        self._plans = {}
        if cfg.safepoint_us > 0:
            self.safepoint(cfg.safepoint_us)
        for i in range(workers):
            w = self.workers[i]
            ms = []
            for (wi, off, hold) in locks:
                if wi == i:
                    ms.append((off, 1, "acquire"))
                    ms.append((min(off + hold, shares[i]), 0, "release"))
            ms.sort()
            ms.append((shares[i], 2, "end"))
            plan = _WorkerPlan(shares[i], ms)
            self._plans[w.id] = plan
            self._advance_worker(w, plan)
        return cyc

    def _lock_schedule(self, shares):
        cfg = self.cfg
        if cfg.locks_per_cycle <= 0 or cfg.lock_hold_us <= 0:
            return []
        count = _poisson(self.rng, cfg.locks_per_cycle)
        out = []
        for _ in range(count):
            wi = self.rng.randrange(len(shares))
            if shares[wi] <= 0:
                continue
            off = self.rng.randrange(shares[wi])
            out.append((wi, off, cfg.lock_hold_us))
        return out

    def _advance_worker(self, w, plan):
        while plan.milestones and plan.milestones[0][0] <= plan.pos:
            _, _, kind = plan.milestones.pop(0)
            if kind == "acquire":
                self.lock_depth += 1
                self.sim.on_lock(w, True)
            elif kind == "release":
                self.lock_depth -= 1
                self.sim.on_lock(w, False)
                if self.lock_depth == 0:
                    self._release_lock_waiters()
            else:
                self._worker_done(w)
                return
        nxt = plan.milestones[0][0]
        self.sched.run_burst(w, nxt - plan.pos, self._on_milestone)

    def _on_milestone(self, w):
        plan = self._plans[w.id]
        nxt = plan.milestones[0][0]
        self.cycle.remaining_work -= nxt - plan.pos
        plan.pos = nxt
        self._advance_worker(w, plan)

    def _worker_done(self, w):
        self.sched.block(w, ThreadState.SLEEPING)
        self._done_workers += 1
        cyc = self.cycle
        if self._done_workers == cyc.workers:
            cyc.phase = "relocating"
            if self.cfg.safepoint_us > 0:
                self.safepoint(self.cfg.safepoint_us, self._reclaim)
            else:
                self._reclaim(None)

    def _reclaim(self, _):
        cyc = self.cycle
        now = self.loop.now
        reclaimed = int(cyc.used_at_start * (1.0 - self.cfg.live_fraction))
        reclaimed = min(reclaimed, self.heap.used)
        self.heap.used -= reclaimed
        cyc.reclaimed_bytes = reclaimed
        cyc.end_us = now
        cyc.phase = "done"
        self.director.record(cyc.workers, max(1, now - cyc.start_us), cyc.total_work, cyc.used_at_start)
        self.cycles.append(cyc)
        self.memory_log.append((now, self.heap.used))
        self.cycle = None
        self._drain_stalls()
        self.sim.on_cycle_end(cyc)
        self.evaluate()

    def _release_lock_waiters(self):
        waiters, self.lock_waiters = self.lock_waiters, []
        now = self.loop.now
        for thread, nbytes, since in waiters:
            if self.lock_depth:
                self.lock_waiters.append((thread, nbytes, since))
                continue
            waited = now - since
            if self.allocate(thread, nbytes):
                self.sim.allocation_done(thread, lock_us=waited)
            else:
                self.sim.note_lock_wait(thread, waited)

    # -- safepoints -------------------------------------------------------

    def safepoint(self, duration: int, then=None):
        """Stop all mutators for ``duration`` microseconds."""
        self.stw_depth += 1
        self.sim.on_safepoint(True)
        if self.stw_depth == 1:
            self.sim.stw_begin()
        self.loop.after(duration, self._safepoint_end, then)

    def _safepoint_end(self, then):
        self.stw_depth -= 1
        if self.stw_depth == 0:
            self.sim.stw_end()
        self.sim.on_safepoint(False)
        if then is not None:
            then(None)


def _poisson(rng, lam: float) -> int:
    # Knuth's product method; lam is small (a handful of locks per cycle)
    limit = math.exp(-lam)
    k = 0
    p = rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k
