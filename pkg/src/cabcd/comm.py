"""Rank collectives with alpha-beta cost accounting.

A program is written once per rank and receives a :class:`RankContext`.
All cross-rank interaction goes through the context's collectives, which
every rank must enter in the same order. Two backends execute programs:

* ``lockstep`` runs every rank as a greenlet on the calling thread and
  switches between them at each collective, in rank order.
* ``threaded`` runs one OS thread per rank and rendezvouses on a barrier.

Both backends funnel through :meth:`CommGroup._complete`, so reductions use
the same fixed binomial tree and are bitwise identical across backends.

Counter conventions (per rank, per collective):

* allreduce / broadcast: L += ceil(log2 P), W += len * ceil(log2 P)
* all_to_all, small-message: L += ceil(log2 P), W += sent * ceil(log2 P)
* all_to_all, large-message: L += P - 1, W += sent

where ``sent`` counts the words a rank ships to other ranks. The critical
path takes the max over ranks at every collective and accumulates it;
local flops are folded in at the next synchronisation point.
"""

from __future__ import annotations

import contextlib
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np


class CollectiveError(RuntimeError):
    """Ranks disagreed on a collective (order, kind, or buffer sizes)."""


@dataclass
class CostCounters:
    flops: int = 0
    words: int = 0
    messages: int = 0
    actual_flops: int = 0

    def __add__(self, other: "CostCounters") -> "CostCounters":
        return CostCounters(self.flops + other.flops, self.words + other.words,
                            self.messages + other.messages,
                            self.actual_flops + other.actual_flops)

    def __iadd__(self, other: "CostCounters") -> "CostCounters":
        # hot path: one call per collective per rank, so no fields() here
        self.flops += other.flops
        self.words += other.words
        self.messages += other.messages
        self.actual_flops += other.actual_flops
        return self

    def copy(self) -> "CostCounters":
        return CostCounters(self.flops, self.words, self.messages, self.actual_flops)

    @staticmethod
    def elementwise_max(items: Sequence["CostCounters"]) -> "CostCounters":
        if not items:
            return CostCounters()
        return CostCounters(max(c.flops for c in items), max(c.words for c in items),
                            max(c.messages for c in items), max(c.actual_flops for c in items))


@dataclass(frozen=True)
class MachineParams:
    gamma: float = 0.0
    alpha_latency: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "alpha_latency", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def load_machine_params(path) -> MachineParams:
    """Read ``gamma``, ``alpha`` and ``beta`` (seconds) from a key-value file.

    Lines look like ``alpha = 1e-6`` or ``alpha: 1e-6``; ``#`` starts a comment.
    """
    vals = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, val = (s.strip() for s in line.split(sep, 1))
                    break
            else:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key = key.lower()
            if key == "alpha_latency":
                key = "alpha"
            if key not in ("gamma", "alpha", "beta"):
                raise ValueError(f"{path}:{line_no}: unknown key {key!r}")
            vals[key] = float(val)
    return MachineParams(gamma=vals.get("gamma", 0.0),
                         alpha_latency=vals.get("alpha", 0.0),
                         beta=vals.get("beta", 0.0))


def predicted_time(counters: CostCounters, m: MachineParams) -> float:
    """gamma*F + alpha*L + beta*W."""
    return m.gamma * counters.flops + m.alpha_latency * counters.messages + m.beta * counters.words


def ceil_log2(p: int) -> int:
    return (p - 1).bit_length() if p > 1 else 0


def tree_sum(buffers: Sequence[np.ndarray]) -> np.ndarray:
    """Sum rank buffers along a fixed binomial tree, rank-index ascending.

    Step ``k`` adds rank ``r + 2**k`` into rank ``r`` for every ``r``
    divisible by ``2**(k+1)``; the result is independent of backend.
    """
    acc = [np.array(b, dtype=np.float64, copy=True) for b in buffers]
    step = 1
    while step < len(acc):
        for r in range(0, len(acc), 2 * step):
            if r + step < len(acc):
                acc[r] += acc[r + step]
        step *= 2
    return acc[0]


def words_of(obj) -> int:
    """Word count of a message payload."""
    if obj is None:
        return 0
    if isinstance(obj, np.ndarray):
        return int(obj.size)
    nnz = getattr(obj, "nnz", None)
    if nnz is not None:
        return int(nnz)
    if isinstance(obj, (list, tuple)):
        return sum(words_of(o) for o in obj)
    if isinstance(obj, (int, float, np.floating, np.integer)):
        return 1
    raise TypeError(f"cannot count words of {type(obj).__name__}")


class CommGroup:
    """Shared state for P ranks: the rendezvous logic and all counters."""

    def __init__(self, P: int, all_to_all_mode: str = "small"):
        if P < 1:
            raise ValueError("rank count must be >= 1")
        if all_to_all_mode not in ("small", "large"):
            raise ValueError("all_to_all_mode must be 'small' or 'large'")
        self.P = P
        self.all_to_all_mode = all_to_all_mode
        self.per_rank = [CostCounters() for _ in range(P)]
        self.critical_path = CostCounters()
        self.phase_critical = defaultdict(CostCounters)
        self.calls = Counter()   # (op, phase) -> collective count
        # flops charged since the last synchronisation, per rank and phase
        self._pending = [defaultdict(CostCounters) for _ in range(P)]

    # ---- local accounting
    def _add_flops(self, rank: int, phase: str, charged: int, actual: int) -> None:
        c = CostCounters(flops=charged, actual_flops=actual)
        self.per_rank[rank] += c
        self._pending[rank][phase] += c

    def _flush_pending(self) -> None:
        totals = []
        phases = set()
        for pend in self._pending:
            tot = CostCounters()
            for ph, c in pend.items():
                tot += c
                phases.add(ph)
            totals.append(tot)
        self.critical_path += CostCounters.elementwise_max(totals)
        for ph in phases:
            self.phase_critical[ph] += CostCounters.elementwise_max(
                [pend.get(ph, CostCounters()) for pend in self._pending])
        self._pending = [defaultdict(CostCounters) for _ in range(self.P)]

    def critical_path_now(self) -> CostCounters:
        """Critical path including flops not yet folded in by a collective."""
        pending = []
        for pend in self._pending:
            tot = CostCounters()
            for c in pend.values():
                tot += c
            pending.append(tot)
        return self.critical_path + CostCounters.elementwise_max(pending)

    def finalize(self) -> None:
        self._flush_pending()

    def _charge_comm(self, phase: str, op: str, per_rank_wl: Sequence[tuple[int, int]]) -> None:
        charges = [CostCounters(words=w, messages=l) for w, l in per_rank_wl]
        for r, c in enumerate(charges):
            self.per_rank[r] += c
        cp = CostCounters.elementwise_max(charges)
        self.critical_path += cp
        self.phase_critical[phase] += cp
        self.calls[(op, phase)] += 1

    # ---- the single code path both backends use
    def _complete(self, arrivals: Sequence[tuple]) -> list:
        """Resolve one collective given every rank's ``(op, phase, args)``."""
        ops = {(a[0], a[1]) for a in arrivals}
        if len(ops) != 1:
            if any(a[0] == "exit" for a in arrivals):
                raise CollectiveError("ranks finished while others wait in a collective")
            raise CollectiveError(f"ranks entered different collectives: {sorted(ops)}")
        op, phase = arrivals[0][0], arrivals[0][1]
        args = [a[2] for a in arrivals]
        P = self.P
        lg = ceil_log2(P)
        if op == "gather_untimed":
            # snapshot the counters here so every backend sees the same value
            snap = self.critical_path_now()
            return [(list(args), snap)] * P
        if op == "exit":
            return [None] * P
        self._flush_pending()
        if op == "allreduce":
            shapes = {np.shape(a) for a in args}
            if len(shapes) != 1:
                raise CollectiveError(f"allreduce buffer shapes differ across ranks: {shapes}")
            total = tree_sum(args)
            n = total.size
            self._charge_comm(phase, op, [(n * lg, lg)] * P)
            return [total.copy() for _ in range(P)]
        if op == "broadcast":
            roots = {a[0] for a in args}
            if len(roots) != 1:
                raise CollectiveError("ranks disagree on the broadcast root")
            root = roots.pop()
            data = np.array(args[root][1], dtype=np.float64, copy=True)
            self._charge_comm(phase, op, [(data.size * lg, lg)] * P)
            return [data.copy() for _ in range(P)]
        if op == "all_to_all":
            for r, send in enumerate(args):
                if len(send) != P:
                    raise CollectiveError(
                        f"rank {r} passed {len(send)} send buffers, expected {P}")
            sent = [sum(words_of(send[j]) for j in range(P) if j != r)
                    for r, send in enumerate(args)]
            if self.all_to_all_mode == "small":
                wl = [(s * lg, lg) for s in sent]
            else:
                wl = [(s, P - 1 if P > 1 else 0) for s in sent]
            self._charge_comm(phase, op, wl)
            return [[args[j][i] for j in range(P)] for i in range(P)]
        if op == "barrier":
            self._charge_comm(phase, op, [(0, lg)] * P)
            return [None] * P
        raise CollectiveError(f"unknown collective {op!r}")


class RankContext:
    """Per-rank handle passed to SPMD programs."""

    def __init__(self, group: CommGroup, rank: int, transport: Callable[[int, tuple], Any]):
        self.group = group
        self.rank = rank
        self.P = group.P
        self._transport = transport
        self._phase = "compute"
        self.last_counters = CostCounters()

    @contextlib.contextmanager
    def phase(self, name: str):
        prev, self._phase = self._phase, name
        try:
            yield self
        finally:
            self._phase = prev

    def add_flops(self, charged: int, actual: Optional[int] = None) -> None:
        self.group._add_flops(self.rank, self._phase, int(charged),
                              int(charged if actual is None else actual))

    def _call(self, op, args):
        return self._transport(self.rank, (op, self._phase, args))

    def allreduce_sum(self, buffer) -> np.ndarray:
        return self._call("allreduce", np.asarray(buffer, dtype=np.float64))

    def broadcast(self, root: int, buffer=None) -> np.ndarray:
        if not 0 <= root < self.P:
            raise ValueError(f"invalid broadcast root {root} for {self.P} ranks")
        return self._call("broadcast", (root, buffer if self.rank == root else None))

    def all_to_all(self, send: Sequence[Any]) -> list:
        """``send[j]`` goes to rank j; returns ``recv`` with ``recv[j]`` from rank j."""
        return self._call("all_to_all", list(send))

    def barrier(self) -> None:
        self._call("barrier", None)

    def gather_untimed(self, obj) -> list:
        """Collect one object per rank on every rank without charging cost.

        Used for instrumentation (snapshots, metrics), never by algorithms.
        The critical-path counters at the rendezvous are left in
        ``last_counters``.
        """
        gathered, self.last_counters = self._call("gather_untimed", obj)
        return gathered


# ------------------------------------------------------------------ backends

def _run_lockstep(group: CommGroup, program: Callable[[RankContext], Any]) -> list:
    import greenlet

    driver = greenlet.getcurrent()

    def transport(rank, msg):
        return driver.switch(("collective", msg))

    ctxs = [RankContext(group, r, transport) for r in range(group.P)]
    glets = [greenlet.greenlet(lambda c=c: ("done", program(c)), parent=driver) for c in ctxs]
    results: list = [None] * group.P
    inbox: list = [None] * group.P
    started = [False] * group.P
    while True:
        arrivals, finished_now = {}, []
        for r, g in enumerate(glets):
            if g.dead:
                continue
            out = g.switch() if not started[r] else g.switch(inbox[r])
            started[r] = True
            kind, payload = out
            if kind == "done":
                results[r] = payload
                finished_now.append(r)
            else:
                arrivals[r] = payload
        if not arrivals:
            break
        if len(arrivals) != group.P:
            missing = sorted(set(range(group.P)) - set(arrivals))
            raise CollectiveError(f"ranks {missing} finished while others wait in a collective")
        outs = group._complete([arrivals[r] for r in range(group.P)])
        inbox = list(outs)
    return results


class _ThreadRendezvous:
    def __init__(self, group: CommGroup):
        self.group = group
        self.slots: list = [None] * group.P
        self.outs: list = [None] * group.P
        self.error: Optional[BaseException] = None
        self.barrier = threading.Barrier(group.P, action=self._resolve)

    def _resolve(self):
        try:
            self.outs = self.group._complete(self.slots)
            self.error = None
        except BaseException as e:  # surfaced on every rank
            self.error = e

    def transport(self, rank, msg):
        self.slots[rank] = msg
        self.barrier.wait()
        if self.error is not None:
            raise self.error
        return self.outs[rank]


def _run_threaded(group: CommGroup, program: Callable[[RankContext], Any]) -> list:
    rv = _ThreadRendezvous(group)
    ctxs = [RankContext(group, r, rv.transport) for r in range(group.P)]
    results: list = [None] * group.P
    errors: list = [None] * group.P

    def body(r):
        try:
            results[r] = program(ctxs[r])
            # closing rendezvous: catches ranks that stop while others still communicate
            rv.transport(r, ("exit", "exit", None))
        except BaseException as e:
            errors[r] = e
            rv.barrier.abort()

    threads = [threading.Thread(target=body, args=(r,), name=f"rank-{r}") for r in range(group.P)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    primary = [e for e in errors if e is not None and not isinstance(e, threading.BrokenBarrierError)]
    if primary:
        raise primary[0]
    if any(e is not None for e in errors):
        raise CollectiveError("rank rendezvous was aborted")
    return results


BACKENDS = ("lockstep", "threaded")


def run_spmd(P: int, program: Callable[[RankContext], Any], backend: str = "lockstep",
             group: Optional[CommGroup] = None, all_to_all_mode: str = "small"):
    """Run ``program(ctx)`` on P ranks; returns ``(per-rank results, group)``."""
    if group is None:
        group = CommGroup(P, all_to_all_mode=all_to_all_mode)
    if backend == "lockstep":
        results = _run_lockstep(group, program)
    elif backend == "threaded":
        results = _run_threaded(group, program)
    else:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    group.finalize()
    return results, group
