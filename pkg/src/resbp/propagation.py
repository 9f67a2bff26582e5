"""Log-domain sum-product messages, error metrics, beliefs and residual bounds.

Messages live in one flat float64 buffer indexed through ``Topology.msg_off``;
every stored message is normalized so that its log-sum-exp is zero.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .errors import ShapeMismatch
from .factor_graph import FACTOR, FactorGraph

njit = numba.njit(cache=True, nogil=True)


# ---------------------------------------------------------------------------
# kernels


@njit
def _normalize_inplace(out, k):
    mx = out[0]
    for x in range(1, k):
        if out[x] > mx:
            mx = out[x]
    s = 0.0
    for x in range(k):
        s += math.exp(out[x] - mx)
    lse = mx + math.log(s)
    for x in range(k):
        out[x] -= lse


@njit
def compute_into(top, logm, e, out, scratch):
    """Evaluate the update of edge ``e`` from ``logm`` into ``out[:card]``."""
    k = top.msg_off[e + 1] - top.msg_off[e]
    if top.edge_f2v[e]:
        a = top.edge_fac[e]
        p = top.edge_pos[e]
        s0 = top.fac_ptr[a]
        arity = top.fac_ptr[a + 1] - s0
        t0 = top.tab_off[a]
        size = top.tab_off[a + 1] - t0
        stride_p = top.fac_stride[s0 + p]
        for x in range(k):
            out[x] = -np.inf
        for idx in range(size):
            v = top.log_table[t0 + idx]
            for q in range(arity):
                if q != p:
                    xq = (idx // top.fac_stride[s0 + q]) % top.fac_card[s0 + q]
                    v += logm[top.msg_off[top.fac_in_edge[s0 + q]] + xq]
            scratch[idx] = v
            xp = (idx // stride_p) % k
            if v > out[xp]:
                out[xp] = v
        acc = scratch[size:size + k]
        for x in range(k):
            acc[x] = 0.0
        for idx in range(size):
            xp = (idx // stride_p) % k
            acc[xp] += math.exp(scratch[idx] - out[xp])
        for x in range(k):
            out[x] += math.log(acc[x])
    else:
        for x in range(k):
            out[x] = 0.0
        for j in range(top.in_ptr[e], top.in_ptr[e + 1]):
            off = top.msg_off[top.in_idx[j]]
            for x in range(k):
                out[x] += logm[off + x]
    _normalize_inplace(out, k)


@njit
def blend_into(old, new, damping, out, k):
    """Store ``(1 - damping) * new + damping * old`` (linear domain) into ``out``."""
    if damping == 0.0:
        for x in range(k):
            out[x] = new[x]
        return
    lw_new = math.log1p(-damping)
    lw_old = math.log(damping)
    for x in range(k):
        u = lw_new + new[x]
        w = lw_old + old[x]
        if u > w:
            out[x] = u + math.log1p(math.exp(w - u))
        else:
            out[x] = w + math.log1p(math.exp(u - w))
    _normalize_inplace(out, k)


@njit
def residual_k(a, b):
    r = 0.0
    for x in range(a.shape[0]):
        d = abs(a[x] - b[x])
        if d > r:
            r = d
    return r


@njit
def dynamic_range_k(a, b):
    lo = np.inf
    hi = -np.inf
    for x in range(a.shape[0]):
        d = b[x] - a[x]
        if d < lo:
            lo = d
        if d > hi:
            hi = d
    return hi - lo


# ---------------------------------------------------------------------------
# message state


class MessageState:
    """One normalized log-message per directed edge plus per-edge versions."""

    def __init__(self, graph: FactorGraph, values=None, version=None):
        top = graph.topology
        self.graph = graph
        self.offsets = top.msg_off
        if values is None:
            values = np.empty(top.msg_off[-1])
            for e in range(graph.num_edges):
                k = top.msg_off[e + 1] - top.msg_off[e]
                values[top.msg_off[e]:top.msg_off[e + 1]] = -math.log(k)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.version = (
            np.zeros(graph.num_edges, np.int64) if version is None
            else np.array(version, dtype=np.int64)
        )

    def __getitem__(self, e):
        return self.values[self.offsets[e]:self.offsets[e + 1]]

    def __len__(self):
        return len(self.version)

    def copy(self):
        return MessageState(self.graph, self.values.copy(), self.version.copy())

    def max_residual(self, other):
        return max((residual(self[e], other[e]) for e in range(len(self))), default=0.0)


def init_uniform(g: FactorGraph) -> MessageState:
    return MessageState(g)


def _scratch(g):
    top = g.topology
    size = int(np.max(np.diff(top.tab_off))) if g.num_factors else 1
    card = max(g.cards) if g.cards else 1
    return np.empty(size + card)


def compute_update(g: FactorGraph, msgs: MessageState, e: int) -> np.ndarray:
    """New normalized log-message for edge ``e``; ``msgs`` is left untouched."""
    top = g.topology
    out = np.empty(top.msg_off[e + 1] - top.msg_off[e])
    compute_into(top, msgs.values, e, out, _scratch(g))
    return out


def apply_update(msgs: MessageState, e: int, new_msg, damping: float = 0.0) -> np.ndarray:
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    new_msg = np.asarray(new_msg, dtype=np.float64)
    old = msgs[e].copy()
    blend_into(old, new_msg, damping, msgs[e], old.shape[0])
    msgs.version[e] += 1
    return msgs[e].copy()


# ---------------------------------------------------------------------------
# metrics


def normalize_log(v):
    v = np.asarray(v, dtype=np.float64)
    mx = np.max(v)
    return v - (mx + np.log(np.sum(np.exp(v - mx))))


def residual(old_msg, new_msg) -> float:
    """Sup-norm distance between two log-messages."""
    return float(np.max(np.abs(np.asarray(new_msg) - np.asarray(old_msg))))


def dynamic_range(old_msg, new_msg) -> float:
    d = np.asarray(new_msg) - np.asarray(old_msg)
    return float(np.max(d) - np.min(d))


def message_kl(p_msg, q_msg) -> float:
    """KL(p || q) for log-domain normalized messages."""
    p = np.asarray(p_msg, dtype=np.float64)
    q = np.asarray(q_msg, dtype=np.float64)
    return max(float(np.sum(np.exp(p) * (p - q))), 0.0)


# ---------------------------------------------------------------------------
# beliefs and the Bethe approximation


def _log_factor_belief(g, msgs, a):
    f = g.factors[a]
    cards = [g.cards[v] for v in f.scope]
    lb = np.log(f.table).reshape(cards)
    for pos, v in enumerate(f.scope):
        shape = [1] * len(cards)
        shape[pos] = cards[pos]
        lb = lb + msgs[g.v2f(v, a)].reshape(shape)
    return normalize_log(lb.ravel()).reshape(cards)


def _log_variable_belief(g, msgs, i):
    lb = np.zeros(g.cards[i])
    for a in g.var_factors[i]:
        lb = lb + msgs[g.f2v(a, i)]
    return normalize_log(lb)


def variable_belief(g: FactorGraph, msgs: MessageState, i: int) -> np.ndarray:
    return np.exp(_log_variable_belief(g, msgs, i))


def factor_belief(g: FactorGraph, msgs: MessageState, a: int) -> np.ndarray:
    """Belief over the joint states of factor ``a``, shaped by its scope."""
    return np.exp(_log_factor_belief(g, msgs, a))


def all_variable_beliefs(g, msgs):
    return [variable_belief(g, msgs, i) for i in range(g.num_variables)]


def _plogp(lb):
    b = np.exp(lb)
    return float(np.sum(b * lb))


def factor_energy_term(g, msgs, a):
    lb = _log_factor_belief(g, msgs, a)
    lt = np.log(g.factors[a].table).reshape(lb.shape)
    return float(np.sum(np.exp(lb) * (lb - lt)))


def variable_entropy_term(g, msgs, i):
    d = len(g.var_factors[i])
    if d == 1:
        return 0.0
    return (1 - d) * _plogp(_log_variable_belief(g, msgs, i))


def bethe_log_z(g: FactorGraph, msgs: MessageState) -> float:
    """Negative Bethe free energy evaluated at the current beliefs."""
    free_energy = sum(factor_energy_term(g, msgs, a) for a in range(g.num_factors))
    free_energy += sum(variable_entropy_term(g, msgs, i) for i in range(g.num_variables))
    return -free_energy


class BetheTracker:
    """Bethe log-partition estimate kept current under single-edge updates.

    A variable->factor message only enters one factor belief and a
    factor->variable message only enters one variable belief, so each update
    touches exactly one term of the sum.
    """

    def __init__(self, g, msgs):
        self.g = g
        self.msgs = msgs
        self.fac_terms = np.array([factor_energy_term(g, msgs, a) for a in range(g.num_factors)])
        self.var_terms = np.array([variable_entropy_term(g, msgs, i) for i in range(g.num_variables)])

    @property
    def value(self):
        return -(math.fsum(self.fac_terms) + math.fsum(self.var_terms))

    def refresh(self, e):
        """Recompute the term fed by edge ``e``; returns the change in log Z."""
        edge = self.g.edges[e]
        if edge.from_factor:
            i = edge.variable
            new = variable_entropy_term(self.g, self.msgs, i)
            delta = self.var_terms[i] - new
            self.var_terms[i] = new
        else:
            a = edge.factor
            new = factor_energy_term(self.g, self.msgs, a)
            delta = self.fac_terms[a] - new
            self.fac_terms[a] = new
        return float(delta)


# ---------------------------------------------------------------------------
# residual bounds


def _normalized_log_table(table):
    t = np.asarray(table, dtype=np.float64).ravel()
    return np.log(t) - np.log(np.sum(t))


def factor_change_bound(old_factor_table, new_factor_table) -> float:
    """Largest absolute log-ratio between two factor tables."""
    old = np.asarray(old_factor_table, dtype=np.float64)
    new = np.asarray(new_factor_table, dtype=np.float64)
    if old.shape != new.shape:
        raise ShapeMismatch(f"table shapes differ: {old.shape} vs {new.shape}")
    if old.size == 0:
        return 0.0
    return float(np.max(np.abs(np.log(new) - np.log(old))))


def normalized_change_bound(old_factor_table, new_factor_table) -> float:
    """``factor_change_bound`` after scaling both tables to sum to one."""
    old = np.asarray(old_factor_table, dtype=np.float64)
    new = np.asarray(new_factor_table, dtype=np.float64)
    if old.shape != new.shape:
        raise ShapeMismatch(f"table shapes differ: {old.shape} vs {new.shape}")
    return float(np.max(np.abs(_normalized_log_table(new) - _normalized_log_table(old))))


def initial_priority(g: FactorGraph, node) -> float:
    """Residual bound for messages leaving ``node`` when starting from uniform.

    Compares the normalized factor table to the uniform table over the same
    joint states.  Variable nodes act as identity factors and get 0.
    """
    kind, idx = node
    if kind != FACTOR:
        return 0.0
    t = g.factors[idx].table
    return float(np.max(np.abs(_normalized_log_table(t) + np.log(t.size))))


def initial_priorities(g: FactorGraph) -> np.ndarray:
    """Per-edge starting priority: the bound of the edge's source node."""
    per_factor = [initial_priority(g, (FACTOR, a)) for a in range(g.num_factors)]
    out = np.zeros(g.num_edges)
    for e, edge in enumerate(g.edges):
        if edge.from_factor:
            out[e] = per_factor[edge.factor]
    return out
