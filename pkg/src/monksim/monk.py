"""Criticality-driven scheduling policy for GC threads.

GC threads sit at IDLE priority and are promoted to NORMAL while a nested
"critical" counter is positive. Counters are bumped around lock holds,
safepoints, and (in the high-utilization fallback) whole cycles. A periodic
reconciler repairs any disagreement between counter and policy.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .sched import CpuStat, SchedPolicy

MAX_THREADS = 100


class ProtocolViolation(RuntimeError):
    """A counter went negative: begin/end events were unbalanced."""


class PolicyConfigError(ValueError):
    pass


class Variant(str, enum.Enum):
    VANILLA = "VANILLA"
    MONK = "MONK"
    MONK_S = "MONK_S"
    MONK_L = "MONK_L"
    HMONK = "HMONK"
    HMONK_S = "HMONK_S"


class FallbackMode(str, enum.Enum):
    EVERY_OTHER_CYCLE = "every-other-cycle"
    WHILE_CRITICAL = "while-critical"


_NAME = re.compile(r"^(HMONK_S|HMONK|MONK_S|MONK_L|MONK|VANILLA)(?:[(_]C?(\d)\)?)?$")


@dataclass
class PolicyConfig:
    variant: Variant = Variant.VANILLA
    headroom: int | None = None
    reconcile_interval_us: int = 10_000
    fallback_mode: FallbackMode = FallbackMode.EVERY_OTHER_CYCLE
    decay_alpha: float = 0.5
    # upper bound on the latency of one policy-change call
    switch_delay_us: int = 5

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.fallback_mode = FallbackMode(self.fallback_mode)
        if self.variant in (Variant.HMONK, Variant.HMONK_S):
            if self.headroom is None or not 0 <= self.headroom <= 4:
                raise PolicyConfigError("HMONK variants need headroom N in 0..4")
        elif self.headroom is not None:
            raise PolicyConfigError(f"{self.variant.value} takes no headroom")
        if not 0.0 < self.decay_alpha <= 1.0:
            raise PolicyConfigError("decay_alpha must lie in (0, 1]")
        if self.reconcile_interval_us <= 0:
            raise PolicyConfigError("reconcile_interval_us must be positive")
        if self.switch_delay_us < 0:
            raise PolicyConfigError("switch_delay_us must be nonnegative")

    @classmethod
    def parse(cls, name: str, **kw) -> "PolicyConfig":
        """Build from a label such as ``MONK_L``, ``HMONK(2)`` or ``HMONK_S_C0``."""
        m = _NAME.match(name.strip().upper())
        if not m:
            raise PolicyConfigError(f"unknown policy variant {name!r}")
        n = None if m.group(2) is None else int(m.group(2))
        return cls(variant=Variant(m.group(1)), headroom=n, **kw)

    @property
    def label(self) -> str:
        if self.headroom is None:
            return self.variant.value
        return f"{self.variant.value}({self.headroom})"

    @property
    def enabled(self) -> bool:
        return self.variant is not Variant.VANILLA

    @property
    def lock_hook(self) -> bool:
        return self.variant is Variant.MONK_L

    @property
    def safepoint_hook(self) -> bool:
        return self.variant in (Variant.MONK_S, Variant.HMONK_S)

    @property
    def fallback(self) -> bool:
        return self.variant in (Variant.HMONK, Variant.HMONK_S)


class CriticalityTable:
    """Per-thread nesting counters indexed by thread id modulo ``size``."""

    def __init__(self, size: int = MAX_THREADS):
        self.size = size
        self.counts = [0] * size

    def index_of(self, tid: int) -> int:
        return tid % self.size

    def check_injective(self, tids) -> None:
        seen = {}
        for tid in tids:
            i = self.index_of(tid)
            if i in seen:
                raise PolicyConfigError(f"threads {seen[i]} and {tid} share counter slot {i}")
            seen[i] = tid

    def __getitem__(self, tid: int) -> int:
        return self.counts[self.index_of(tid)]


@dataclass
class CpuUsageEstimator:
    last_sum: int = 0
    last_idle: int = 0
    smoothed: float = 0.0
    alpha: float = 0.5
    primed: bool = False


@dataclass
class CriticalSectionFlag:
    inside: bool = False


def cpu_usage_from_stat(prev: CpuStat, cur: CpuStat, fallback: float = 0.0) -> float:
    """Percent of non-idle time between two cumulative counter snapshots."""
    cpu_sum = cur.user + cur.nice + cur.system + cur.idle
    cpu_delta = cpu_sum - (prev.user + prev.nice + prev.system + prev.idle)
    if cpu_delta == 0:
        return fallback
    idle_delta = cur.idle - prev.idle
    cpu_used = cpu_delta - idle_delta
    return 100.0 * cpu_used / cpu_delta


def decayed(est: CpuUsageEstimator, sample: float) -> float:
    est.smoothed = est.alpha * sample + (1.0 - est.alpha) * est.smoothed
    return est.smoothed


def threshold_from_headroom(cores: int, headroom: int) -> float:
    if cores < 1 or not 0 <= headroom < cores:
        raise PolicyConfigError(f"headroom {headroom} needs 0 <= N < cores ({cores})")
    return 100.0 * (cores - headroom) / cores


def update_estimator(est: CpuUsageEstimator, stat: CpuStat) -> float:
    """Fold one snapshot into the estimator; the first call only records a baseline."""
    if est.primed and stat.total > est.last_sum:
        prev = CpuStat(user=est.last_sum - est.last_idle, idle=est.last_idle)
        decayed(est, cpu_usage_from_stat(prev, stat, est.smoothed))
    est.last_sum = stat.total
    est.last_idle = stat.idle
    est.primed = True
    return est.smoothed


def exceeds(usage: float, threshold: float) -> bool:
    """Utilization test for the fallback.

    Usage is compared at whole-percent resolution so that a threshold of 100
    (no headroom) is reachable when every core is busy.
    """
    return round(usage) >= threshold if threshold >= 100.0 else usage > threshold


def high_monk_decision(flag: CriticalSectionFlag, usage: float, pressing: bool,
                       config: PolicyConfig, threshold: float, threads, counters) -> str:
    """Fallback step run whenever the director has decided to start a cycle.

    ``counters`` supplies ``increment_nested``/``decrement_nested``. Returns
    ``"enter"``, ``"exit"`` or ``"none"``.
    """
    hot = pressing and exceeds(usage, threshold)
    if flag.inside:
        if config.fallback_mode is FallbackMode.WHILE_CRITICAL and hot:
            return "none"
        for tid in threads:
            counters.decrement_nested(tid, "fallback")
        flag.inside = False
        return "exit"
    if hot:
        for tid in threads:
            counters.increment_nested(tid, "fallback")
        flag.inside = True
        return "enter"
    return "none"


class MonkRuntime:
    """Counter bookkeeping and policy switching bound to a live scheduler."""

    def __init__(self, config: PolicyConfig, sched, loop, rng, gc_threads, cores: int):
        self.config = config
        self.sched = sched
        self.loop = loop
        self.rng = rng
        self.table = CriticalityTable()
        self.gc_threads = [t.id for t in gc_threads]
        self.table.check_injective(self.gc_threads)
        self.flag = CriticalSectionFlag()
        self.estimator = CpuUsageEstimator(alpha=config.decay_alpha)
        self.threshold = None
        if config.fallback:
            self.threshold = threshold_from_headroom(cores, config.headroom)
        self.policy_log: list = []
        self.checks = 0
        self.corrections = 0
        self.transitions: list = []
        self.base_policy = SchedPolicy.IDLE if config.enabled else SchedPolicy.NORMAL

    def start(self):
        if self.config.enabled:
            # independent timer phase, so checks do not land on director ticks
            phase = self.rng.randrange(self.config.reconcile_interval_us)
            self.loop.after(self.config.reconcile_interval_us + phase, self._tick)

    # -- counters ---------------------------------------------------------

    def _require_gc(self, tid):
        if not self.sched.get(tid).is_gc:
            raise ProtocolViolation(f"thread {tid} is not a GC thread")

    def increment_nested(self, tid: int, reason: str = "lock") -> None:
        self._require_gc(tid)
        i = self.table.index_of(tid)
        if self.table.counts[i] == 0:
            self._request(tid, SchedPolicy.NORMAL, reason, 1)
        self.table.counts[i] += 1

    def decrement_nested(self, tid: int, reason: str = "lock") -> None:
        self._require_gc(tid)
        i = self.table.index_of(tid)
        if self.table.counts[i] == 0:
            raise ProtocolViolation(f"counter underflow on thread {tid}")
        self.table.counts[i] -= 1
        if self.table.counts[i] == 0:
            self._request(tid, SchedPolicy.IDLE, reason, 0)

    def _request(self, tid, policy, reason, count):
        # the policy call lands a little after the counter update; other
        # events can slip into that gap, which is what the reconciler repairs
        delay = self.rng.randint(0, self.config.switch_delay_us) if self.config.switch_delay_us else 0
        if delay == 0:
            self._apply((tid, policy, reason, count))
        else:
            self.loop.after(delay, self._apply, (tid, policy, reason, count))

    def _apply(self, arg):
        tid, policy, reason, count = arg
        self.sched.set_policy(tid, policy)
        self.policy_log.append((self.loop.now, tid, policy.name, count, reason))

    # -- hooks ------------------------------------------------------------

    def on_lock(self, thread, acquire: bool) -> None:
        if not self.config.lock_hook or not thread.is_gc:
            return
        if acquire:
            self.increment_nested(thread.id, "lock")
        else:
            self.decrement_nested(thread.id, "lock")

    def on_safepoint(self, begin: bool) -> None:
        if not self.config.safepoint_hook:
            return
        op = self.increment_nested if begin else self.decrement_nested
        for tid in self.gc_threads:
            op(tid, "safepoint")

    def on_decision_point(self) -> None:
        update_estimator(self.estimator, self.sched.read_cpu_stat())

    def on_gc_start(self, pressing: bool) -> str:
        if not self.config.fallback:
            return "none"
        action = high_monk_decision(
            self.flag, self.estimator.smoothed, pressing, self.config, self.threshold,
            self.gc_threads, self,
        )
        if action != "none":
            self.transitions.append((self.loop.now, action))
        return action

    # -- reconciliation ---------------------------------------------------

    def reconcile(self, now: int | None = None) -> int:
        self.checks += 1
        fixed = 0
        counts = self.table.counts
        for tid in self.gc_threads:
            want = SchedPolicy.NORMAL if counts[self.table.index_of(tid)] > 0 else SchedPolicy.IDLE
            if self.sched.get(tid).policy is not want:
                self.sched.set_policy(tid, want)
                self.policy_log.append((self.loop.now, tid, want.name, counts[self.table.index_of(tid)], "reconcile"))
                fixed += 1
        self.corrections += fixed
        return fixed

    def _tick(self, _):
        self.reconcile(self.loop.now)
        self.loop.after(self.config.reconcile_interval_us, self._tick)

    def quiescent(self) -> bool:
        return all(self.table[tid] == 0 for tid in self.gc_threads)
