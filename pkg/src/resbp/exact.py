"""Exact partition function and single-variable marginals.

Two independent routes: brute-force enumeration of the joint table, and
log-domain variable elimination for graphs of small induced width.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import MissingVariable, TooLarge, WidthTooLarge
from .factor_graph import FactorGraph

MAX_ENUMERATION_STATES = 2 ** 22
MAX_TABLE_ENTRIES = 2 ** 24


@dataclass
class ExactResult:
    log_z: float
    marginals: list


def _lse(a, axis=None):
    mx = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - mx), axis=axis, keepdims=True)) + mx
    return np.squeeze(out, axis=axis) if axis is not None else float(out.ravel()[0])


def _aligned_log_table(g, f, axes):
    """Log table of ``f`` transposed to follow ``axes`` (a sorted var tuple)."""
    cards = [g.cards[v] for v in f.scope]
    lt = np.log(f.table).reshape(cards)
    perm = sorted(range(len(f.scope)), key=lambda p: f.scope[p])
    lt = np.transpose(lt, perm)
    shape = [1] * len(axes)
    where = {v: k for k, v in enumerate(axes)}
    for v in f.scope:
        shape[where[v]] = g.cards[v]
    return lt.reshape(shape)


def enumerate_marginals(g: FactorGraph) -> ExactResult:
    states = int(np.prod(g.cards, dtype=np.float64)) if g.cards else 1
    if states > MAX_ENUMERATION_STATES or g.num_variables > 64:
        raise TooLarge(f"{states} joint states exceed the enumeration guard")
    axes = tuple(range(g.num_variables))
    logj = np.zeros(g.cards)
    for f in g.factors:
        logj = logj + _aligned_log_table(g, f, axes)
    log_z = _lse(logj)
    marginals = []
    for i in axes:
        others = tuple(k for k in axes if k != i)
        m = np.exp(_lse(logj, axis=others) - log_z) if others else np.exp(logj - log_z)
        marginals.append(m / m.sum())
    return ExactResult(float(log_z), marginals)


# ---------------------------------------------------------------------------
# variable elimination


class _LogFactor:
    __slots__ = ("vars", "table")

    def __init__(self, vars_, table):
        self.vars = vars_
        self.table = table


def _product(g, factors):
    vars_ = tuple(sorted(set().union(*(f.vars for f in factors))))
    acc = np.zeros([1] * len(vars_))
    for f in factors:
        shape = [1] * len(vars_)
        for v in f.vars:
            shape[vars_.index(v)] = g.cards[v]
        acc = acc + f.table.reshape(shape)
    return _LogFactor(vars_, acc)


def _initial_factors(g):
    out = []
    for f in g.factors:
        vars_ = tuple(sorted(f.scope))
        out.append(_LogFactor(vars_, _aligned_log_table(g, f, vars_)))
    return out


def induced_table_size(g: FactorGraph, order: Sequence[int]) -> int:
    """Largest intermediate table (in entries) created by eliminating in ``order``."""
    scopes = [set(f.scope) for f in g.factors]
    largest = 1
    for v in order:
        touching = [s for s in scopes if v in s]
        merged = set().union(*touching) if touching else {v}
        size = int(np.prod([g.cards[u] for u in merged], dtype=np.float64))
        largest = max(largest, size)
        scopes = [s for s in scopes if v not in s]
        scopes.append(merged - {v})
    return largest


def min_fill_order(g: FactorGraph):
    """Greedy min-fill ordering, ties broken by smaller variable id."""
    adj = {i: set() for i in range(g.num_variables)}
    for f in g.factors:
        for u in f.scope:
            adj[u].update(w for w in f.scope if w != u)
    order = []
    while adj:
        def fill(v):
            nb = list(adj[v])
            return sum(1 for a in range(len(nb)) for b in range(a + 1, len(nb))
                       if nb[b] not in adj[nb[a]])
        v = min(adj, key=lambda u: (fill(u), u))
        nb = adj.pop(v)
        for a in nb:
            adj[a].discard(v)
            adj[a].update(nb - {a})
        order.append(v)
    return order


def _marginalize_to(f, keep):
    """Log-sum-exp ``f`` down to the variables in ``keep``."""
    axes = tuple(k for k, v in enumerate(f.vars) if v not in keep)
    if not axes:
        return f
    table = f.table
    for ax in reversed(axes):
        table = _lse(table, axis=ax)
    return _LogFactor(tuple(v for v in f.vars if v in keep), table)


def _bucket_tree(g, order):
    """Forward elimination then a backward calibration pass.

    Bucket ``k`` holds the original factors whose earliest-eliminated variable
    is ``order[k]``.  Eliminating it sends a message to the bucket of the next
    variable of its scope, which forms a tree over buckets.
    """
    n = len(order)
    pos = {v: k for k, v in enumerate(order)}
    own = [[] for _ in range(n)]
    log_z = 0.0
    for f in _initial_factors(g):
        if f.vars:
            own[min(pos[v] for v in f.vars)].append(f)
        else:
            log_z += float(f.table.ravel()[0])
    incoming = [[] for _ in range(n)]  # (child bucket, message)
    for k, v in enumerate(order):
        parts = own[k] + [m for _, m in incoming[k]] + [_LogFactor((v,), np.zeros(g.cards[v]))]
        full = _product(g, parts)
        axis = full.vars.index(v)
        up = _LogFactor(full.vars[:axis] + full.vars[axis + 1:], _lse(full.table, axis=axis))
        mx = float(np.max(up.table))
        log_z += mx
        up.table = up.table - mx
        if up.vars:
            incoming[min(pos[u] for u in up.vars)].append((k, up))

    down = [None] * n
    marginals = [None] * g.num_variables
    for k in range(n - 1, -1, -1):
        v = order[k]
        parts = own[k] + [m for _, m in incoming[k]] + [_LogFactor((v,), np.zeros(g.cards[v]))]
        if down[k] is not None:
            parts.append(down[k])
        belief = _product(g, parts)
        lm = _marginalize_to(belief, {v}).table
        m = np.exp(lm - _lse(lm))
        marginals[v] = m / m.sum()
        for child, msg in incoming[k]:
            shape = [1] * len(belief.vars)
            for u in msg.vars:
                shape[belief.vars.index(u)] = g.cards[u]
            quotient = _LogFactor(belief.vars, belief.table - msg.table.reshape(shape))
            dm = _marginalize_to(quotient, set(msg.vars))
            dm.table = dm.table - np.max(dm.table)
            down[child] = dm
    return log_z, marginals


def eliminate_marginals(g: FactorGraph, order: Optional[Sequence[int]] = None) -> ExactResult:
    """Exact result by variable elimination in ``order`` (default: min-fill)."""
    order = list(min_fill_order(g) if order is None else order)
    if sorted(order) != list(range(g.num_variables)):
        raise ValueError("order must be a permutation of the variable ids")
    largest = induced_table_size(g, order)
    if largest > MAX_TABLE_ENTRIES:
        raise WidthTooLarge(f"elimination order creates a table of {largest} entries")
    log_z, marginals = _bucket_tree(g, order)
    return ExactResult(float(log_z), marginals)


def avg_variable_kl(exact: ExactResult, beliefs) -> float:
    """Mean over variables of KL(exact marginal || belief)."""
    if isinstance(beliefs, Mapping):
        lookup = beliefs
    else:
        lookup = dict(enumerate(beliefs))
    total = 0.0
    for i, p in enumerate(exact.marginals):
        if i not in lookup:
            raise MissingVariable(i)
        p = np.asarray(p, dtype=np.float64)
        b = np.asarray(lookup[i], dtype=np.float64)
        mask = p > 0
        total += float(np.sum(p[mask] * (np.log(p[mask]) - np.log(b[mask]))))
    n = len(exact.marginals)
    return max(total / n, 0.0) if n else 0.0
