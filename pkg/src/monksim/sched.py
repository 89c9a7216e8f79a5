"""Event loop and multicore scheduler with NORMAL / IDLE policies.

The scheduler keeps one global runqueue. NORMAL threads are chosen by
smallest (vruntime, id); IDLE threads only get cores that no runnable NORMAL
thread wants. Time is an integer count of microseconds.
"""
from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass
from typing import Callable, Iterable


class SchedPolicy(enum.IntEnum):
    IDLE = 0
    NORMAL = 1


class ThreadKind(str, enum.Enum):
    MUTATOR = "mutator"
    GC_WORKER = "gc-worker"
    DIRECTOR = "director"
    RECONCILER = "reconciler"


class ThreadState(str, enum.Enum):
    RUNNABLE = "runnable"
    RUNNING = "running"
    BLOCKED = "blocked"
    SLEEPING = "sleeping"


class SchedError(RuntimeError):
    """Configuration bug detected by the scheduler (unknown thread, bad burst)."""


class EventLoop:
    """Min-heap of (time, insertion seq, callback, arg)."""

    __slots__ = ("now", "_q", "_seq")

    def __init__(self):
        self.now = 0
        self._q = []
        self._seq = 0

    def at(self, time: int, fn: Callable, arg=None) -> None:
        if time < self.now:
            raise SchedError(f"event scheduled in the past ({time} < {self.now})")
        self._seq += 1
        heapq.heappush(self._q, (time, self._seq, fn, arg))

    def after(self, delay: int, fn: Callable, arg=None) -> None:
        self.at(self.now + delay, fn, arg)

    def run(self, until: int) -> None:
        """Process every event strictly before ``until``, then advance the clock to it."""
        q = self._q
        pop = heapq.heappop
        while q and q[0][0] < until:
            t, _, fn, arg = pop(q)
            self.now = t
            fn(arg)
        if until > self.now:
            self.now = until

    def __len__(self):
        return len(self._q)


class SimThread:
    __slots__ = (
        "id", "kind", "policy", "state", "vruntime", "pending_work", "on_done",
        "core", "run_start", "quantum_start", "token", "cpu_time", "tag",
    )

    def __init__(self, tid: int, kind: ThreadKind, policy: SchedPolicy):
        self.id = tid
        self.kind = kind
        self.policy = policy
        self.state = ThreadState.SLEEPING
        self.vruntime = 0
        self.pending_work = 0
        self.on_done = None
        self.core = None
        self.run_start = 0
        self.quantum_start = 0
        self.token = 0
        self.cpu_time = 0
        self.tag = None

    @property
    def is_gc(self) -> bool:
        return self.kind is ThreadKind.GC_WORKER or self.kind is ThreadKind.DIRECTOR

    def __repr__(self):
        return f"SimThread({self.id}, {self.kind.value}, {self.policy.name}, {self.state.value})"


class CoreState:
    __slots__ = ("id", "thread", "qtoken", "armed", "quantum_end")

    def __init__(self, cid: int):
        self.id = cid
        self.thread = None
        self.quantum_end = 0
        self.qtoken = 0
        self.armed = False

    @property
    def occupant(self) -> int | None:
        return None if self.thread is None else self.thread.id


@dataclass(frozen=True)
class CpuStat:
    """Cumulative busy/idle microseconds, the /proc/stat analogue."""

    user: int = 0
    nice: int = 0
    system: int = 0
    idle: int = 0

    @property
    def total(self) -> int:
        return self.user + self.nice + self.system + self.idle


def dispatch(cores: Iterable[int], threads: Iterable[SimThread]) -> dict[int, SimThread | None]:
    """Reference assignment of runnable threads to cores.

    NORMAL threads are placed first by (vruntime, id); IDLE threads only
    receive the cores left over.
    """
    core_ids = sorted(cores)
    ranked = sorted(threads, key=lambda t: (-int(t.policy), t.vruntime, t.id))
    out = {c: None for c in core_ids}
    for c, t in zip(core_ids, ranked):
        out[c] = t
    return out


def _rank(t: SimThread):
    return (t.vruntime, t.id)


class Scheduler:
    def __init__(self, loop: EventLoop, n_cores: int, quantum_us: int = 1000,
                 strict_idle: bool = True, trace: list | None = None):
        if n_cores < 1:
            raise SchedError("need at least one core")
        if quantum_us < 1:
            raise SchedError("quantum must be positive")
        self.loop = loop
        self.n_cores = n_cores
        self.quantum = quantum_us
        self.strict_idle = strict_idle
        self.cores = [CoreState(i) for i in range(n_cores)]
        self.threads: dict[int, SimThread] = {}
        self.trace = trace
        self._waiting: list[SimThread] = []
        self._free = list(range(n_cores))
        self._n_normal = 0
        self._n_idle = 0
        self._acct_t = 0
        self._user = 0
        self._nice = 0
        self._idle = 0
        self._busy = False
        self._again = False
        self.dispatch_instants = 0
        self.context_switches = 0
        self.audit = False
        self.violations = 0

    # -- bookkeeping ------------------------------------------------------

    def _log(self, event, t, detail=""):
        if self.trace is not None:
            self.trace.append((self.loop.now, event, t.id, -1 if t.core is None else t.core, detail))

    def _advance(self):
        now = self.loop.now
        dt = now - self._acct_t
        if dt:
            self._user += self._n_normal * dt
            self._nice += self._n_idle * dt
            self._idle += (self.n_cores - self._n_normal - self._n_idle) * dt
            self._acct_t = now

    def read_cpu_stat(self) -> CpuStat:
        self._advance()
        return CpuStat(self._user, self._nice, 0, self._idle)

    def _checkpoint(self, t: SimThread):
        ran = self.loop.now - t.run_start
        if ran:
            t.pending_work -= ran
            t.vruntime += ran
            t.cpu_time += ran
            t.run_start = self.loop.now

    def _place(self, t: SimThread, core: CoreState):
        self._advance()
        core.thread = t
        t.core = core.id
        t.state = ThreadState.RUNNING
        t.run_start = t.quantum_start = self.loop.now
        core.quantum_end = self.loop.now + self.quantum
        if t.policy is SchedPolicy.NORMAL:
            self._n_normal += 1
        else:
            self._n_idle += 1
        t.token += 1
        self.context_switches += 1
        self.loop.at(self.loop.now + t.pending_work, self._complete, (t, t.token))
        self._log("run", t)

    def _unplace(self, t: SimThread, state: ThreadState, event: str):
        self._advance()
        self._checkpoint(t)
        core = self.cores[t.core]
        self._log(event, t)
        core.thread = None
        core.qtoken += 1
        core.armed = False
        if t.policy is SchedPolicy.NORMAL:
            self._n_normal -= 1
        else:
            self._n_idle -= 1
        self._free.append(core.id)
        t.core = None
        t.token += 1
        t.state = state

    def _current_vruntime(self, t: SimThread) -> int:
        if t.state is ThreadState.RUNNING:
            return t.vruntime + self.loop.now - t.run_start
        return t.vruntime

    def _place_vruntime(self, t: SimThread):
        # a waking thread may not undercut the class minimum (CFS placement)
        floor = None
        for c in self.cores:
            o = c.thread
            if o is not None and o is not t and o.policy == t.policy:
                v = self._current_vruntime(o)
                if floor is None or v < floor:
                    floor = v
        for w in self._waiting:
            if w is not t and w.policy == t.policy and (floor is None or w.vruntime < floor):
                floor = w.vruntime
        if floor is not None and floor > t.vruntime:
            t.vruntime = floor

    # -- public operations --------------------------------------------------

    def spawn(self, kind: ThreadKind, policy: SchedPolicy, tid: int | None = None) -> SimThread:
        tid = len(self.threads) if tid is None else tid
        if tid in self.threads:
            raise SchedError(f"duplicate thread id {tid}")
        t = SimThread(tid, kind, policy)
        self.threads[tid] = t
        self._log("spawn", t, policy.name)
        return t

    def get(self, tid: int) -> SimThread:
        try:
            return self.threads[tid]
        except KeyError:
            raise SchedError(f"unknown thread id {tid}") from None

    def run_burst(self, t: SimThread, work_us: int, on_done: Callable[[SimThread], None]) -> None:
        """Give ``t`` ``work_us`` of CPU work; ``on_done(t)`` fires when it has run that long."""
        if work_us < 0:
            raise SchedError("negative burst")
        t.on_done = on_done
        if t.state is ThreadState.RUNNING:
            self._checkpoint(t)
            t.pending_work = work_us
            t.token += 1
            self.loop.at(self.loop.now + work_us, self._complete, (t, t.token))
        else:
            t.pending_work = work_us
            self.wake(t)

    def wake(self, t: SimThread) -> None:
        if t.state is ThreadState.RUNNING or t.state is ThreadState.RUNNABLE:
            return
        self._place_vruntime(t)
        t.state = ThreadState.RUNNABLE
        self._waiting.append(t)
        self._log("wake", t)
        self._reschedule()

    def block(self, t: SimThread, state: ThreadState = ThreadState.BLOCKED) -> None:
        """Take ``t`` off the CPU / runqueue, keeping its remaining burst."""
        if t.state is ThreadState.RUNNING:
            self._unplace(t, state, "block")
            self._reschedule()
        elif t.state is ThreadState.RUNNABLE:
            self._waiting.remove(t)
            t.state = state
            self._log("block", t)
        else:
            t.state = state

    def set_policy(self, tid: int, policy: SchedPolicy) -> bool:
        t = self.get(tid)
        if t.policy == policy:
            return True
        if t.state is ThreadState.RUNNING:
            self._advance()
            if t.policy is SchedPolicy.NORMAL:
                self._n_normal -= 1
                self._n_idle += 1
            else:
                self._n_idle -= 1
                self._n_normal += 1
            t.policy = policy
        else:
            t.policy = policy
            if t.state is ThreadState.RUNNABLE:
                self._place_vruntime(t)
        self._log("policy", t, policy.name)
        self._reschedule()
        return True

    # -- dispatching ------------------------------------------------------

    def _best(self, pool):
        best = None
        for w in pool:
            if best is None or w.policy > best.policy or (
                w.policy == best.policy and (w.vruntime, w.id) < (best.vruntime, best.id)
            ):
                best = w
        return best

    def _reschedule(self):
        if self._busy:
            self._again = True
            return
        self._busy = True
        try:
            again = True
            while again:
                self._again = False
                self._fill()
                again = self._again
        finally:
            self._busy = False
        self.dispatch_instants += 1
        if self.audit and self.priority_violation():
            self.violations += 1

    def _fill(self):
        waiting = self._waiting
        free = self._free
        while free and waiting:
            t = self._best(waiting)
            waiting.remove(t)
            cid = min(free)
            free.remove(cid)
            self._place(t, self.cores[cid])
        if self.strict_idle and waiting and self._n_idle:
            while True:
                cand = self._best(waiting)
                if cand is None or cand.policy is not SchedPolicy.NORMAL:
                    break
                victim = None
                for c in self.cores:
                    o = c.thread
                    if o is not None and o.policy is SchedPolicy.IDLE and (
                        victim is None or (self._current_vruntime(o), o.id) > (self._current_vruntime(victim), victim.id)
                    ):
                        victim = o
                if victim is None:
                    break
                cid = victim.core
                self._unplace(victim, ThreadState.RUNNABLE, "preempt")
                waiting.append(victim)
                waiting.remove(cand)
                free.remove(cid)
                self._place(cand, self.cores[cid])
        if waiting:
            self._arm()

    def _arm(self):
        normal_waiting = any(w.policy is SchedPolicy.NORMAL for w in self._waiting)
        q = self.quantum
        now = self.loop.now
        for c in self.cores:
            o = c.thread
            if o is None or c.armed:
                continue
            if o.policy is SchedPolicy.NORMAL and not normal_waiting:
                continue
            elapsed = now - o.quantum_start
            if elapsed < q:
                b = o.quantum_start + q
            else:
                b = o.quantum_start + -(-elapsed // q) * q
            c.armed = True
            c.qtoken += 1
            self.loop.at(b, self._quantum, (c, c.qtoken))

    def _quantum(self, arg):
        core, tok = arg
        if core.qtoken != tok:
            return
        core.armed = False
        occ = core.thread
        self._checkpoint(occ)
        if occ.policy is SchedPolicy.NORMAL:
            pool = [w for w in self._waiting if w.policy is SchedPolicy.NORMAL]
        else:
            pool = self._waiting
        best = self._best(pool) if pool else None
        if best is not None and (
            best.policy > occ.policy or (best.vruntime, best.id) < (occ.vruntime, occ.id)
        ):
            cid = occ.core
            self._unplace(occ, ThreadState.RUNNABLE, "preempt")
            self._waiting.append(occ)
            self._waiting.remove(best)
            self._free.remove(cid)
            self._place(best, core)
        else:
            occ.quantum_start = self.loop.now
            core.quantum_end = self.loop.now + self.quantum
        self._reschedule()

    def _complete(self, arg):
        t, tok = arg
        if t.token != tok or t.state is not ThreadState.RUNNING:
            return
        self._checkpoint(t)
        if t.pending_work != 0:
            raise SchedError(f"thread {t.id} completed with {t.pending_work} us left")
        cb = t.on_done
        t.on_done = None
        cb(t)
        if t.state is ThreadState.RUNNING and t.pending_work == 0 and t.on_done is None:
            self._unplace(t, ThreadState.SLEEPING, "sleep")
        self._reschedule()

    # -- inspection ---------------------------------------------------------

    def waiting(self) -> list[SimThread]:
        return list(self._waiting)

    def running(self) -> list[SimThread]:
        return [c.thread for c in self.cores if c.thread is not None]

    def priority_violation(self) -> bool:
        """True when an IDLE thread holds a core while a NORMAL thread waits."""
        return any(w.policy is SchedPolicy.NORMAL for w in self._waiting) and any(
            c.thread is not None and c.thread.policy is SchedPolicy.IDLE for c in self.cores
        )
