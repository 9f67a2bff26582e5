"""Message-update schedules: synchronous, round-robin, RBP1L and RBP0L.

RBP1L computes every pending update to learn its residual and keeps the
computed value in the queue until it is performed or replaced.  RBP0L never
computes an update it does not perform: the priority of an edge is estimated
from how far its inputs have moved since the edge was last sent.

Two RBP0L ledgers are available.  ``"residual"`` adds the residual of each input
step and reprioritizes an edge to the plain ledger sum.  ``"sound"`` (default)
adds the dynamic range of each input step and keeps the starting bound of an
edge (or the remainder left by damping) until the edge is sent.  For
normalized messages only the second is a guaranteed upper bound on the
residual of the pending update.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numba
import numpy as np

from .errors import StructureMismatch
from .factor_graph import FactorGraph
from .pqueue import (
    IndexedPriorityQueue, heap_contains, heap_peek_priority, heap_pop, heap_push,
)
from .propagation import (
    MessageState, _scratch, blend_into, compute_into, dynamic_range_k,
    initial_priorities, init_uniform, normalized_change_bound, residual_k,
)

njit = numba.njit(cache=True, nogil=True)

SCHEDULES = ("synchronous", "round_robin", "rbp1l", "rbp0l")
LEDGERS = ("sound", "residual")


@dataclass(frozen=True)
class RunOptions:
    tolerance: float = 1e-3
    max_sweeps: int = 1000
    damping: float = 0.0
    schedule: str = "rbp0l"
    ledger: str = "sound"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be a positive integer")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")
        if self.ledger not in LEDGERS:
            raise ValueError(f"unknown ledger {self.ledger!r}; choose from {LEDGERS}")


@dataclass
class RunStats:
    schedule: str
    converged: bool
    messages_computed: int
    messages_performed: int
    wall_time: float
    final_max_residual: float
    sweeps_equivalent: float
    wasted: int = 0
    pending_at_exit: int = 0
    bound_violations: int = 0
    max_bound_excess: float = 0.0
    seed: Optional[int] = None
    model: str = ""

    @property
    def wasted_fraction(self):
        if not self.messages_computed:
            return 0.0
        return self.wasted / self.messages_computed

    def as_dict(self):
        d = asdict(self)
        d["wasted_fraction"] = self.wasted_fraction
        return d


# ---------------------------------------------------------------------------
# residual ledger


@njit
def ledger_reset(T, top, e):
    for j in range(top.in_ptr[e], top.in_ptr[e + 1]):
        T[j] = 0.0


@njit
def ledger_add(T, top, e, r):
    for j in range(top.dep_ptr[e], top.dep_ptr[e + 1]):
        T[top.dep_slot[j]] += r


@njit
def ledger_total(T, top, f):
    v = 0.0
    for j in range(top.in_ptr[f], top.in_ptr[f + 1]):
        v += T[j]
    return v


class ResidualLedger:
    """Accumulated input change ``T(bc, cd)`` for every dependent pair.

    ``T`` is aligned with ``topology.in_idx``: the accumulators feeding edge
    ``f`` are ``T[in_ptr[f]:in_ptr[f + 1]]``, one per input edge.
    """

    def __init__(self, graph: FactorGraph):
        self.graph = graph
        self.T = np.zeros(len(graph.topology.in_idx))

    def accumulators(self, f):
        top = self.graph.topology
        return dict(zip(top.in_idx[top.in_ptr[f]:top.in_ptr[f + 1]].tolist(),
                        self.T[top.in_ptr[f]:top.in_ptr[f + 1]].tolist()))

    def reset(self, e):
        ledger_reset(self.T, self.graph.topology, e)

    def add(self, e, r):
        """Add ``r`` to every accumulator fed by ``e``; returns the dependents."""
        top = self.graph.topology
        ledger_add(self.T, top, e, float(r))
        return top.dep_idx[top.dep_ptr[e]:top.dep_ptr[e + 1]].tolist()

    def priority(self, f):
        return float(ledger_total(self.T, self.graph.topology, f))


# ---------------------------------------------------------------------------
# kernels


@njit
def _synchronous_kernel(top, logm, version, tol, cutoff, damping, scratch):
    E = version.shape[0]
    pend = np.empty_like(logm)
    old = np.empty(scratch.shape[0])
    computed = 0
    performed = 0
    maxr = 0.0
    converged = False
    while True:
        if E == 0:
            converged = True
            break
        if computed + E > cutoff:
            break
        for e in range(E):
            o = top.msg_off[e]
            compute_into(top, logm, e, pend[o:top.msg_off[e + 1]], scratch)
        computed += E
        maxr = 0.0
        for e in range(E):
            o = top.msg_off[e]
            k = top.msg_off[e + 1] - o
            old[:k] = logm[o:o + k]
            blend_into(old, pend[o:o + k], damping, logm[o:o + k], k)
            version[e] += 1
            r = residual_k(old[:k], logm[o:o + k])
            if r > maxr:
                maxr = r
        performed += E
        if maxr < tol:
            converged = True
            break
    return converged, computed, performed, maxr


@njit
def _round_robin_kernel(top, logm, version, tol, cutoff, damping, scratch):
    E = version.shape[0]
    target = np.empty(scratch.shape[0])
    old = np.empty(scratch.shape[0])
    computed = 0
    maxr = 0.0
    converged = False
    while True:
        if E == 0:
            converged = True
            break
        if computed + E > cutoff:
            break
        maxr = 0.0
        for e in range(E):
            o = top.msg_off[e]
            k = top.msg_off[e + 1] - o
            compute_into(top, logm, e, target, scratch)
            old[:k] = logm[o:o + k]
            blend_into(old, target, damping, logm[o:o + k], k)
            version[e] += 1
            r = residual_k(old[:k], logm[o:o + k])
            if r > maxr:
                maxr = r
        computed += E
        if maxr < tol:
            converged = True
            break
    return converged, computed, computed, maxr


@njit
def _rbp1l_kernel(top, logm, version, h, tol, cutoff, damping, scratch):
    E = version.shape[0]
    pend = np.empty_like(logm)
    old = np.empty(scratch.shape[0])
    computed = 0
    performed = 0
    wasted = 0
    for e in range(E):
        o = top.msg_off[e]
        o1 = top.msg_off[e + 1]
        compute_into(top, logm, e, pend[o:o1], scratch)
        computed += 1
        heap_push(h, e, residual_k(pend[o:o1], logm[o:o1]))
    converged = False
    while True:
        if h.meta[0] == 0 or heap_peek_priority(h) < tol:
            converged = True
            break
        if computed >= cutoff:
            break
        e = heap_pop(h)
        o = top.msg_off[e]
        k = top.msg_off[e + 1] - o
        old[:k] = logm[o:o + k]
        blend_into(old, pend[o:o + k], damping, logm[o:o + k], k)
        version[e] += 1
        performed += 1
        for j in range(top.dep_ptr[e], top.dep_ptr[e + 1]):
            f = top.dep_idx[j]
            fo = top.msg_off[f]
            fo1 = top.msg_off[f + 1]
            compute_into(top, logm, f, pend[fo:fo1], scratch)
            computed += 1
            if heap_contains(h, f):
                wasted += 1
            heap_push(h, f, residual_k(pend[fo:fo1], logm[fo:fo1]))
        if damping > 0.0:
            # the damped step left part of the update unsent; recompute and requeue
            compute_into(top, logm, e, pend[o:o + k], scratch)
            computed += 1
            heap_push(h, e, residual_k(pend[o:o + k], logm[o:o + k]))
    return converged, computed, performed, wasted, h.meta[0]


@njit
def _rbp0l_kernel(top, logm, version, h, T, base, tol, cutoff, damping,
                  sound, check, rec_edge, rec_vals, scratch):
    target = np.empty(scratch.shape[0])
    old = np.empty(scratch.shape[0])
    computed = 0
    performed = 0
    violations = 0
    max_excess = 0.0
    nrec = 0
    rpos = 0
    converged = False
    while True:
        if h.meta[0] == 0 or heap_peek_priority(h) < tol:
            converged = True
            break
        if computed >= cutoff:
            break
        p = heap_peek_priority(h)
        e = heap_pop(h)
        o = top.msg_off[e]
        k = top.msg_off[e + 1] - o
        compute_into(top, logm, e, target, scratch)
        computed += 1
        old[:k] = logm[o:o + k]
        blend_into(old, target, damping, logm[o:o + k], k)
        version[e] += 1
        performed += 1
        stored = logm[o:o + k]
        if check:
            excess = residual_k(old[:k], target[:k]) - p
            if excess > 1e-9:
                violations += 1
            if excess > max_excess:
                max_excess = excess
        if nrec < rec_edge.shape[0] and rpos + k <= rec_vals.shape[0]:
            rec_edge[nrec] = e
            rec_vals[rpos:rpos + k] = stored
            nrec += 1
            rpos += k
        if sound:
            r = dynamic_range_k(old[:k], stored)
        else:
            r = residual_k(old[:k], stored)
        ledger_reset(T, top, e)
        base[e] = 0.0
        for j in range(top.dep_ptr[e], top.dep_ptr[e + 1]):
            f = top.dep_idx[j]
            T[top.dep_slot[j]] += r
            v = ledger_total(T, top, f)
            if sound:
                v += base[f]
            heap_push(h, f, v)
        if damping > 0.0:
            # exact distance still to go towards the undamped update
            rem = residual_k(stored, target[:k])
            base[e] = rem
            heap_push(h, e, rem)
    return converged, computed, performed, violations, max_excess, nrec


# ---------------------------------------------------------------------------
# drivers


def _cutoff(g, opts):
    return opts.max_sweeps * g.num_edges


def _stats(g, name, converged, computed, performed, wall, final, **extra):
    E = g.num_edges
    return RunStats(
        schedule=name, converged=bool(converged),
        messages_computed=int(computed), messages_performed=int(performed),
        wall_time=wall, final_max_residual=float(max(final, 0.0)),
        sweeps_equivalent=computed / E if E else 0.0, **extra,
    )


def run_synchronous(g: FactorGraph, opts: RunOptions = RunOptions(schedule="synchronous")):
    msgs = init_uniform(g)
    t0 = time.perf_counter()
    conv, comp, perf, maxr = _synchronous_kernel(
        g.topology, msgs.values, msgs.version, opts.tolerance, _cutoff(g, opts),
        opts.damping, _scratch(g))
    return msgs, _stats(g, "synchronous", conv, comp, perf, time.perf_counter() - t0, maxr)


def run_round_robin(g: FactorGraph, opts: RunOptions = RunOptions(schedule="round_robin")):
    msgs = init_uniform(g)
    t0 = time.perf_counter()
    conv, comp, perf, maxr = _round_robin_kernel(
        g.topology, msgs.values, msgs.version, opts.tolerance, _cutoff(g, opts),
        opts.damping, _scratch(g))
    return msgs, _stats(g, "round_robin", conv, comp, perf, time.perf_counter() - t0, maxr)


def run_rbp1l(g: FactorGraph, opts: RunOptions = RunOptions(schedule="rbp1l")):
    msgs = init_uniform(g)
    q = IndexedPriorityQueue(g.num_edges)
    t0 = time.perf_counter()
    conv, comp, perf, wasted, pending = _rbp1l_kernel(
        g.topology, msgs.values, msgs.version, q.arrays, opts.tolerance,
        _cutoff(g, opts), opts.damping, _scratch(g))
    wall = time.perf_counter() - t0
    final = q.peek()[1] if len(q) else 0.0
    return msgs, _stats(g, "rbp1l", conv, comp, perf, wall, final,
                        wasted=int(wasted), pending_at_exit=int(pending))


@dataclass
class WarmStart:
    """Initial RBP0L configuration: messages, queue, zeroed ledger."""

    messages: MessageState
    queue: IndexedPriorityQueue
    ledger: ResidualLedger
    priorities: np.ndarray = field(repr=False)


def cold_start(g: FactorGraph) -> WarmStart:
    return _start(g, init_uniform(g), initial_priorities(g))


def _start(g, msgs, priorities):
    q = IndexedPriorityQueue(g.num_edges)
    for e in range(g.num_edges):
        q.push(e, priorities[e])
    return WarmStart(msgs, q, ResidualLedger(g), np.asarray(priorities, dtype=np.float64))


def warm_restart_priorities(old_g: FactorGraph, new_g: FactorGraph,
                            converged_msgs: MessageState) -> WarmStart:
    """Starting point for re-running RBP0L on ``new_g`` from messages of ``old_g``.

    Each factor->variable edge is prioritized by how much its factor changed
    (both tables normalized first); variable->factor edges start at zero.
    """
    if not old_g.same_structure(new_g):
        raise StructureMismatch("old and new graphs differ in variables or scopes")
    change = [normalized_change_bound(fo.table, fn.table)
              for fo, fn in zip(old_g.factors, new_g.factors)]
    pri = np.zeros(new_g.num_edges)
    for e, edge in enumerate(new_g.edges):
        if edge.from_factor:
            pri[e] = change[edge.factor]
    msgs = MessageState(new_g, converged_msgs.values.copy(), converged_msgs.version.copy())
    return _start(new_g, msgs, pri)


@dataclass
class Recording:
    edges: np.ndarray
    values: np.ndarray

    def steps(self, g):
        """Yield ``(edge, stored message)`` for every performed update."""
        off = 0
        card = g.topology.msg_off
        for e in self.edges.tolist():
            k = int(card[e + 1] - card[e])
            yield e, self.values[off:off + k]
            off += k


def run_rbp0l(g: FactorGraph, opts: RunOptions = RunOptions(schedule="rbp0l"),
              start: Optional[WarmStart] = None, *, check_bound=False,
              record=0):
    """RBP0L from uniform messages, or from ``start`` (consumed in place).

    ``check_bound`` counts pops whose true residual exceeds the queue priority.
    ``record`` > 0 keeps the first ``record`` performed updates; the recording
    is then returned as a third value.
    """
    if start is None:
        start = cold_start(g)
    msgs = start.messages
    top = g.topology
    rec_edge = np.zeros(record, np.int64)
    rec_vals = np.zeros(record * (max(g.cards) if g.cards else 1))
    base = start.priorities.copy()
    t0 = time.perf_counter()
    conv, comp, perf, viol, excess, nrec = _rbp0l_kernel(
        top, msgs.values, msgs.version, start.queue.arrays, start.ledger.T, base,
        opts.tolerance, _cutoff(g, opts), opts.damping,
        opts.ledger == "sound", check_bound,
        rec_edge, rec_vals, _scratch(g))
    wall = time.perf_counter() - t0
    q = start.queue
    final = q.peek()[1] if len(q) else 0.0
    stats = _stats(g, "rbp0l", conv, comp, perf, wall, final,
                   pending_at_exit=len(q), bound_violations=int(viol),
                   max_bound_excess=float(excess))
    if record:
        used = sum(int(top.msg_off[e + 1] - top.msg_off[e]) for e in rec_edge[:nrec])
        return msgs, stats, Recording(rec_edge[:nrec].copy(), rec_vals[:used].copy())
    return msgs, stats


_RUNNERS = {
    "synchronous": run_synchronous,
    "round_robin": run_round_robin,
    "rbp1l": run_rbp1l,
    "rbp0l": run_rbp0l,
}


def run(g: FactorGraph, opts: RunOptions):
    """Dispatch on ``opts.schedule``; returns ``(MessageState, RunStats)``."""
    return _RUNNERS[opts.schedule](g, opts)
