"""One simulated run: scheduler, mutator pool, collector and policy wired together."""
from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .config import ScenarioConfig
from .gc import GcEngine
from .monk import MonkRuntime
from .sched import EventLoop, Scheduler, ThreadKind, SchedPolicy
from .workload import ArrivalProcess, MutatorPool, RateStep, iter_arrivals, schedule_arrivals, write_requests_csv


@dataclass
class RunResult:
    config: ScenarioConfig
    seed: int
    horizon_us: int
    settle_us: int
    records: list
    cycles: list
    stall_times: list
    policy_log: list
    memory_log: list
    corrections: int
    checks: int
    dispatch_instants: int
    violations: int
    cpu: tuple
    backlog: int
    cpu_at_settle: tuple = (0, 0, 0, 0)
    trace: list | None = None
    extra: dict = field(default_factory=dict)

    def window(self, lo: int | None = None, hi: int | None = None) -> list[int]:
        """Latencies of requests arriving in ``[lo, hi)``.

        Requests still unfinished at the horizon count with the time they
        have waited so far, so saturation is never hidden.
        """
        lo = self.settle_us if lo is None else lo
        hi = self.horizon_us if hi is None else hi
        out = []
        for r in self.records:
            if lo <= r.arrival < hi:
                out.append(r.completion - r.arrival if r.completion is not None else self.horizon_us - r.arrival)
        return out

    @property
    def max_latency_us(self) -> int:
        lats = self.window()
        return max(lats) if lats else 0

    @property
    def stalls(self) -> int:
        return sum(1 for t in self.stall_times if t >= self.settle_us)

    def window_counts(self) -> tuple[int, int]:
        """(arrivals, completions) falling inside ``[settle, horizon)``."""
        lo, hi = self.settle_us, self.horizon_us
        arrived = sum(1 for r in self.records if lo <= r.arrival < hi)
        done = sum(1 for r in self.records if r.completion is not None and lo <= r.completion < hi)
        return arrived, done

    def cpu_load(self) -> float:
        """Mean CPU usage in percent over ``[settle, horizon)``."""
        delta = [b - a for a, b in zip(self.cpu_at_settle, self.cpu)]
        total = sum(delta)
        return 100.0 * (total - delta[3]) / total if total else 0.0

    def percentile(self, q: float, lo=None, hi=None) -> float:
        lats = sorted(self.window(lo, hi))
        if not lats:
            return 0.0
        idx = min(len(lats) - 1, max(0, math.ceil(q / 100.0 * len(lats)) - 1))
        return float(lats[idx])

    def summary(self) -> dict:
        lats = self.window()
        done = sum(1 for r in self.records if r.completion is not None and r.arrival >= self.settle_us)
        span = (self.horizon_us - self.settle_us) / 1e6
        return {
            "policy": self.config.policy.label,
            "seed": self.seed,
            "rate": self.config.arrival.rate,
            "requests": len(lats),
            "completed": done,
            "throughput": done / span if span > 0 else 0.0,
            "cpu_load": round(self.cpu_load(), 6),
            "max_latency_us": max(lats) if lats else 0,
            "p99_latency_us": self.percentile(99),
            "mean_latency_us": sum(lats) / len(lats) if lats else 0.0,
            "stalls": self.stalls,
            "cycles": len(self.cycles),
            "corrections": self.corrections,
            "reconcile_checks": self.checks,
            "violations": self.violations,
            "dispatch_instants": self.dispatch_instants,
            "backlog": self.backlog,
        }


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: int, *, gc_enabled: bool | None = None,
                 trace: bool = False, audit: bool = False):
        if gc_enabled is None:
            gc_enabled = cfg.gc.enabled
        self.cfg = cfg
        self.seed = seed
        self.loop = EventLoop()
        self.trace = [] if trace else None
        self.sched = Scheduler(self.loop, cfg.cores, cfg.quantum_us, cfg.strict_idle, self.trace)
        self.sched.audit = audit
        self.pool = MutatorPool(self, cfg.mutators, cfg.request, random.Random(f"{seed}:service"))
        self.gc = None
        self.monk = None
        self.stall_times: list[int] = []
        if gc_enabled:
            self.gc = GcEngine(self, cfg.gc, cfg.cores, random.Random(f"{seed}:gc"))
            base = SchedPolicy.IDLE if cfg.policy.enabled else SchedPolicy.NORMAL
            self.gc.spawn_threads(base)
            self.sched.spawn(ThreadKind.RECONCILER, SchedPolicy.NORMAL)
            self.monk = MonkRuntime(cfg.policy, self.sched, self.loop, random.Random(f"{seed}:monk"),
                                    self.gc.workers, cfg.cores)

    # -- hooks used by the collector and the mutator pool ------------------

    def allocate(self, thread, nbytes: int) -> bool:
        if self.gc is None:
            return True
        before = self.gc.stalls
        ok = self.gc.allocate(thread, nbytes)
        if self.gc.stalls != before:
            self.stall_times.append(self.loop.now)
        return ok

    def allocation_done(self, thread, stall_us: int = 0, lock_us: int = 0):
        self.pool.allocation_done(thread, stall_us, lock_us)

    def note_lock_wait(self, thread, lock_us: int):
        self.pool.note_lock_wait(thread, lock_us)

    def on_director_decision_point(self):
        self.monk.on_decision_point()
        self.gc.memory_log.append((self.loop.now, self.gc.heap.used))

    def on_gc_start_decision(self, decision):
        self.monk.on_gc_start(decision.pressing)

    def on_lock(self, thread, acquire: bool):
        self.monk.on_lock(thread, acquire)

    def on_safepoint(self, begin: bool):
        self.monk.on_safepoint(begin)

    def stw_begin(self):
        self.pool.pause()

    def stw_end(self):
        self.pool.resume()

    def on_cycle_end(self, cycle):
        pass

    # -- driving ----------------------------------------------------------

    def run(self, horizon: int | None = None, arrivals=None) -> RunResult:
        cfg = self.cfg
        horizon = cfg.horizon_us if horizon is None else horizon
        if arrivals is None:
            proc = ArrivalProcess(cfg.arrival.kind, cfg.arrival.rate, self.seed, cfg.arrival.burst_rate,
                                  cfg.arrival.period_us, cfg.arrival.duty)
            arrivals = iter_arrivals(proc, horizon)
        self.pool.feed(arrivals)
        settle = min(cfg.settle_us, horizon - 1)
        snap = {}
        self.loop.at(settle, lambda _: snap.setdefault("cpu", self.sched.read_cpu_stat()))
        if self.gc is not None:
            self.gc.start()
            self.monk.start()
        self.loop.run(horizon)
        stat = self.sched.read_cpu_stat()
        mid = snap.get("cpu", stat)
        return RunResult(
            config=cfg, seed=self.seed, horizon_us=horizon, settle_us=settle,
            records=self.pool.records, cycles=list(self.gc.cycles) if self.gc else [],
            stall_times=self.stall_times,
            policy_log=self.monk.policy_log if self.monk else [],
            memory_log=self.gc.memory_log if self.gc else [],
            corrections=self.monk.corrections if self.monk else 0,
            checks=self.monk.checks if self.monk else 0,
            dispatch_instants=self.sched.dispatch_instants, violations=self.sched.violations,
            cpu=(stat.user, stat.nice, stat.system, stat.idle),
            cpu_at_settle=(mid.user, mid.nice, mid.system, mid.idle), backlog=self.pool.backlog(),
            trace=self.trace,
        )


def run_scenario(cfg: ScenarioConfig, seed: int, **kw) -> RunResult:
    return Simulation(cfg, seed, **kw).run()


def run_schedule(cfg: ScenarioConfig, seed: int, steps: list[RateStep], **kw) -> RunResult:
    """Run with a piecewise-constant injection rate instead of the configured one."""
    horizon = steps[-1].end_us
    sim = Simulation(cfg, seed, **kw)
    return sim.run(horizon, schedule_arrivals(steps, cfg.arrival.kind, seed))


def write_artifacts(result: RunResult, outdir) -> dict[str, Path]:
    """Write the CSV/JSON artifacts of one run; returns name -> path."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    header = result.config.header_lines(result.seed)
    paths = {}

    p = out / "requests.csv"
    write_requests_csv(p, result.records, header)
    paths["requests"] = p

    p = out / "gc_log.csv"
    with open(p, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle_id", "start_us", "end_us", "workers", "pressing", "reclaimed_bytes",
                    "stalls_during_cycle"])
        for c in result.cycles:
            w.writerow([c.id, c.start_us, c.end_us, c.workers, int(c.pressing), c.reclaimed_bytes,
                        c.stalls_during_cycle])
    paths["gc_log"] = p

    p = out / "policy_log.csv"
    with open(p, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_us", "thread_id", "policy", "counter", "reason"])
        w.writerows(result.policy_log)
    paths["policy_log"] = p

    p = out / "memory.csv"
    with open(p, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_us", "used_bytes"])
        w.writerows(result.memory_log)
    paths["memory"] = p

    if result.trace is not None:
        p = out / "trace.csv"
        with open(p, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_us", "event", "thread_id", "core_id", "detail"])
            w.writerows(result.trace)
        paths["trace"] = p

    p = out / "summary.json"
    p.write_text(json.dumps({"header": header, **result.summary()}, indent=2, sort_keys=True) + "\n")
    paths["summary"] = p
    return paths
