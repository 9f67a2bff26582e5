"""Discrete factor graphs, the model text format, and random Potts grids.

Tables are kept in the linear domain and flattened row-major with the last
scope variable varying fastest.  Directed edges are numbered densely:
all variable->factor edges first (ordered by variable id, then factor id),
then all factor->variable edges (ordered by factor id, then variable id).
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NonPositiveEntry, ParseError, ScopeMismatch, UnknownVariable, ModelError

VARIABLE = 0
FACTOR = 1

FORMAT_HEADER = "FACTORGRAPH 1"
RNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class VariableSpec:
    id: int
    cardinality: int


@dataclass(frozen=True, eq=False)
class Factor:
    id: int
    scope: tuple
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(int(v) for v in self.scope))
        table = np.array(self.table, dtype=np.float64).ravel()
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def __eq__(self, other):
        if not isinstance(other, Factor):
            return NotImplemented
        return (
            self.id == other.id
            and self.scope == other.scope
            and np.array_equal(self.table, other.table)
        )

    __hash__ = None


@dataclass(frozen=True)
class Edge:
    """A directed edge between a variable and a factor."""

    source: tuple  # (kind, id)
    target: tuple

    @property
    def from_factor(self):
        return self.source[0] == FACTOR

    @property
    def variable(self):
        return self.target[1] if self.from_factor else self.source[1]

    @property
    def factor(self):
        return self.source[1] if self.from_factor else self.target[1]


# Flat integer/float arrays describing the graph; consumed by the numba kernels.
Topology = namedtuple(
    "Topology",
    [
        "var_card",     # (V,) cardinality of each variable
        "edge_f2v",     # (E,) 1 for factor->variable edges
        "edge_var",     # (E,) variable endpoint
        "edge_fac",     # (E,) factor endpoint
        "edge_pos",     # (E,) position of the variable in the factor scope
        "edge_rev",     # (E,) the opposite direction of the same adjacency
        "msg_off",      # (E+1,) offsets into a flat message buffer
        "in_ptr",       # (E+1,) CSR: messages an update of edge e reads
        "in_idx",
        "dep_ptr",      # (E+1,) CSR: edges whose update reads edge e
        "dep_idx",
        "dep_slot",     # position of e inside in_idx of the dependent edge
        "fac_ptr",      # (F+1,) CSR over scope positions
        "fac_card",
        "fac_stride",
        "fac_in_edge",  # variable->factor edge for each scope position
        "tab_off",      # (F+1,) offsets into log_table
        "log_table",
        "var_ptr",      # (V+1,) CSR: factor->variable edges into each variable
        "var_in_edge",
    ],
)


class FactorGraph:
    """Immutable bipartite graph of variables and positive factor tables."""

    def __init__(self, variables, factors):
        self.variables = tuple(variables)
        self.factors = tuple(factors)
        self.cards = tuple(v.cardinality for v in self.variables)
        var_factors = [[] for _ in self.variables]
        for f in self.factors:
            for v in f.scope:
                var_factors[v].append(f.id)
        self.var_factors = tuple(tuple(sorted(fs)) for fs in var_factors)
        self.edges = self._number_edges()
        self._edge_index = {(e.source, e.target): k for k, e in enumerate(self.edges)}
        self.topology = self._build_topology()

    @property
    def num_variables(self):
        return len(self.variables)

    @property
    def num_factors(self):
        return len(self.factors)

    @property
    def num_edges(self):
        return len(self.edges)

    def edge_id(self, source, target):
        """Edge id for ``(kind, id)`` source and target handles."""
        return self._edge_index[(tuple(source), tuple(target))]

    def v2f(self, var, fac):
        return self._edge_index[((VARIABLE, var), (FACTOR, fac))]

    def f2v(self, fac, var):
        return self._edge_index[((FACTOR, fac), (VARIABLE, var))]

    def neighbors(self, node):
        kind, idx = node
        if kind == VARIABLE:
            return [(FACTOR, a) for a in self.var_factors[idx]]
        return [(VARIABLE, v) for v in self.factors[idx].scope]

    def _number_edges(self):
        pairs = []
        for i, fs in enumerate(self.var_factors):
            for a in fs:
                pairs.append(((VARIABLE, i), (FACTOR, a)))
        for f in self.factors:
            for v in sorted(f.scope):
                pairs.append(((FACTOR, f.id), (VARIABLE, v)))
        pairs.sort()
        return tuple(Edge(s, t) for s, t in pairs)

    def _build_topology(self):
        E = len(self.edges)
        edge_f2v = np.zeros(E, np.int64)
        edge_var = np.zeros(E, np.int64)
        edge_fac = np.zeros(E, np.int64)
        edge_pos = np.zeros(E, np.int64)
        edge_rev = np.zeros(E, np.int64)
        msg_off = np.zeros(E + 1, np.int64)
        for k, e in enumerate(self.edges):
            edge_f2v[k] = e.from_factor
            edge_var[k] = e.variable
            edge_fac[k] = e.factor
            edge_pos[k] = self.factors[e.factor].scope.index(e.variable)
            edge_rev[k] = self._edge_index[(e.target, e.source)]
            msg_off[k + 1] = msg_off[k] + self.cards[e.variable]

        # inputs of (c -> d) are (b -> c) for b in N(c) \ d
        inputs = []
        for e in self.edges:
            c = e.source
            inputs.append([
                self._edge_index[(b, c)] for b in self.neighbors(c) if b != e.target
            ])
        in_ptr = np.zeros(E + 1, np.int64)
        in_ptr[1:] = np.cumsum([len(x) for x in inputs])
        in_idx = np.array([b for x in inputs for b in x], dtype=np.int64)

        deps = [[] for _ in range(E)]
        for f, ins in enumerate(inputs):
            for slot, b in enumerate(ins):
                deps[b].append((f, in_ptr[f] + slot))
        dep_ptr = np.zeros(E + 1, np.int64)
        dep_ptr[1:] = np.cumsum([len(x) for x in deps])
        dep_idx = np.array([f for x in deps for f, _ in x], dtype=np.int64)
        dep_slot = np.array([s for x in deps for _, s in x], dtype=np.int64)

        F = len(self.factors)
        fac_ptr = np.zeros(F + 1, np.int64)
        fac_ptr[1:] = np.cumsum([len(f.scope) for f in self.factors])
        fac_card, fac_stride, fac_in_edge = [], [], []
        tab_off = np.zeros(F + 1, np.int64)
        for f in self.factors:
            cards = [self.cards[v] for v in f.scope]
            stride = 1
            strides = []
            for k in reversed(cards):
                strides.append(stride)
                stride *= k
            fac_card.extend(cards)
            fac_stride.extend(reversed(strides))
            fac_in_edge.extend(self.v2f(v, f.id) for v in f.scope)
            tab_off[f.id + 1] = tab_off[f.id] + f.table.size
        if F:
            log_table = np.log(np.concatenate([f.table for f in self.factors]))
        else:
            log_table = np.zeros(0)

        V = len(self.variables)
        var_ptr = np.zeros(V + 1, np.int64)
        var_ptr[1:] = np.cumsum([len(fs) for fs in self.var_factors])
        var_in_edge = np.array(
            [self.f2v(a, i) for i, fs in enumerate(self.var_factors) for a in fs],
            dtype=np.int64,
        )
        return Topology(
            np.array(self.cards, dtype=np.int64), edge_f2v, edge_var, edge_fac,
            edge_pos, edge_rev, msg_off, in_ptr, in_idx, dep_ptr, dep_idx, dep_slot,
            fac_ptr, np.array(fac_card, np.int64), np.array(fac_stride, np.int64),
            np.array(fac_in_edge, np.int64), tab_off, log_table, var_ptr, var_in_edge,
        )

    def same_structure(self, other):
        return self.cards == other.cards and [f.scope for f in self.factors] == [
            f.scope for f in other.factors
        ]

    def __eq__(self, other):
        if not isinstance(other, FactorGraph):
            return NotImplemented
        return self.variables == other.variables and self.factors == other.factors

    __hash__ = None

    def __repr__(self):
        return (
            f"FactorGraph(variables={self.num_variables}, factors={self.num_factors}, "
            f"edges={self.num_edges})"
        )


def build_graph(variables: Sequence[VariableSpec], factors: Sequence[Factor]) -> FactorGraph:
    variables = list(variables)
    factors = list(factors)
    for k, v in enumerate(variables):
        if v.id != k:
            raise ModelError(f"variable ids must be dense 0..V-1; got {v.id} at position {k}")
        if v.cardinality < 1:
            raise ModelError(f"variable {v.id} has cardinality {v.cardinality}")
    for k, f in enumerate(factors):
        if f.id != k:
            raise ModelError(f"factor ids must be dense 0..F-1; got {f.id} at position {k}")
        if len(set(f.scope)) != len(f.scope):
            raise ModelError(f"factor {f.id} repeats a variable in its scope {f.scope}")
        size = 1
        for v in f.scope:
            if not 0 <= v < len(variables):
                raise UnknownVariable(f"factor {f.id} references unknown variable {v}")
            size *= variables[v].cardinality
        if f.table.size != size:
            raise ScopeMismatch(
                f"factor {f.id} table has {f.table.size} entries, scope needs {size}"
            )
        if not (np.all(np.isfinite(f.table)) and np.all(f.table > 0)):
            raise NonPositiveEntry(f"factor {f.id} has a non-positive or non-finite entry")
    return FactorGraph(variables, factors)


def graph_from_tables(cards: Iterable[int], tables: Iterable[tuple]) -> FactorGraph:
    """Shorthand: ``tables`` is a sequence of ``(scope, table)`` pairs."""
    variables = [VariableSpec(i, int(k)) for i, k in enumerate(cards)]
    factors = [Factor(a, scope, table) for a, (scope, table) in enumerate(tables)]
    return build_graph(variables, factors)


def potts_table(alpha):
    w = math.exp(-alpha)
    return [1.0, w, w, 1.0]


def unary_table(u):
    return [1.0, math.exp(-u)]


def gen_potts_grid(n: int, c: float, seed: int) -> FactorGraph:
    """Random ``n`` x ``n`` binary grid with Potts couplings drawn from U[-c, c].

    Variable ``r * n + col`` sits at row ``r``.  Factors are emitted as unaries
    (row-major), then horizontal pairs (row-major), then vertical pairs.
    """
    if n < 1:
        raise ValueError("grid side must be >= 1")
    if c < 0:
        raise ValueError("coupling bound must be >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    unary = rng.uniform(-c, c, size=n * n)
    horiz = rng.uniform(-c, c, size=n * (n - 1))
    vert = rng.uniform(-c, c, size=(n - 1) * n)

    tables = [((i,), unary_table(u)) for i, u in enumerate(unary)]
    k = 0
    for r in range(n):
        for col in range(n - 1):
            i = r * n + col
            tables.append(((i, i + 1), potts_table(horiz[k])))
            k += 1
    k = 0
    for r in range(n - 1):
        for col in range(n):
            i = r * n + col
            tables.append(((i, i + n), potts_table(vert[k])))
            k += 1
    return graph_from_tables([2] * (n * n), tables)


def grid_column_major_order(n):
    return [r * n + col for col in range(n) for r in range(n)]


def save_model(g: FactorGraph) -> str:
    lines = [FORMAT_HEADER, str(g.num_variables), " ".join(str(k) for k in g.cards),
             str(g.num_factors)]
    for f in g.factors:
        lines.append(" ".join(str(x) for x in (len(f.scope), *f.scope)))
        lines.append(" ".join(format(float(x), ".17g") for x in f.table))
    return "\n".join(lines) + "\n"


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _ints(lineno, line):
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise ParseError(lineno, f"expected integers, got {line!r}") from None


def load_model(text: str) -> FactorGraph:
    lines = _content_lines(text)

    def take(what):
        try:
            return next(lines)
        except StopIteration:
            raise ParseError(len(text.splitlines()) + 1, f"unexpected end of file, expected {what}")

    lineno, line = take("header")
    if line.split() != FORMAT_HEADER.split():
        raise ParseError(lineno, f"expected {FORMAT_HEADER!r}")
    lineno, line = take("variable count")
    counts = _ints(lineno, line)
    if len(counts) != 1 or counts[0] < 0:
        raise ParseError(lineno, "expected a single non-negative variable count")
    nvars = counts[0]
    if nvars:
        lineno, line = take("cardinalities")
        cards = _ints(lineno, line)
    else:
        cards = []
    if len(cards) != nvars:
        raise ParseError(lineno, f"declared {nvars} variables but listed {len(cards)} cardinalities")
    if any(k < 1 for k in cards):
        raise ParseError(lineno, "cardinalities must be >= 1")
    lineno, line = take("factor count")
    counts = _ints(lineno, line)
    if len(counts) != 1 or counts[0] < 0:
        raise ParseError(lineno, "expected a single non-negative factor count")
    nfac = counts[0]

    factors = []
    for a in range(nfac):
        lineno, line = take(f"scope of factor {a}")
        scope_line = _ints(lineno, line)
        if not scope_line or scope_line[0] != len(scope_line) - 1:
            raise ParseError(lineno, f"factor {a}: scope size does not match listed ids")
        scope = scope_line[1:]
        size = 1
        for v in scope:
            if not 0 <= v < nvars:
                raise ParseError(lineno, f"factor {a}: unknown variable {v}")
            size *= cards[v]
        if len(set(scope)) != len(scope):
            raise ParseError(lineno, f"factor {a}: repeated variable in scope")
        lineno, line = take(f"table of factor {a}")
        try:
            table = [float(tok) for tok in line.split()]
        except ValueError:
            raise ParseError(lineno, f"factor {a}: malformed table entry") from None
        if len(table) != size:
            raise ParseError(lineno, f"factor {a}: table has {len(table)} entries, expected {size}")
        if not all(math.isfinite(x) and x > 0 for x in table):
            raise NonPositiveEntry(f"line {lineno}: factor {a} has a non-positive entry")
        factors.append(Factor(a, scope, table))
    extra = next(lines, None)
    if extra is not None:
        raise ParseError(extra[0], f"declared {nfac} factors but found trailing content")
    return build_graph([VariableSpec(i, k) for i, k in enumerate(cards)], factors)


def read_model(path) -> FactorGraph:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())


def write_model(g: FactorGraph, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(save_model(g))
