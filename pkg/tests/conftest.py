import itertools
import math

import numpy as np
import pytest

from resbp.factor_graph import graph_from_tables

ACCEPTANCE_LINES = []


def brute_force(g):
    """Partition function and marginals by explicit loops over joint states."""
    weights = []
    for x in itertools.product(*[range(k) for k in g.cards]):
        logw = 0.0
        for f in g.factors:
            idx = 0
            for v in f.scope:
                idx = idx * g.cards[v] + x[v]
            logw += math.log(f.table[idx])
        weights.append((x, logw))
    mx = max(w for _, w in weights)
    z = sum(math.exp(w - mx) for _, w in weights)
    log_z = mx + math.log(z)
    marg = [np.zeros(k) for k in g.cards]
    for x, w in weights:
        p = math.exp(w - log_z)
        for i, xi in enumerate(x):
            marg[i][xi] += p
    return log_z, marg


def random_table(rng, size, spread=5.0):
    return np.exp(rng.uniform(-spread, spread, size=size))


def random_tree(rng, n_vars, card=2, unary_prob=0.7, spread=5.0):
    """Random tree of pairwise factors plus optional unaries."""
    cards = [card] * n_vars if isinstance(card, int) else list(card)
    tables = []
    for i in range(1, n_vars):
        j = int(rng.integers(0, i))
        scope = (j, i) if rng.random() < 0.5 else (i, j)
        tables.append((scope, random_table(rng, cards[i] * cards[j], spread)))
    for i in range(n_vars):
        if rng.random() < unary_prob:
            tables.append(((i,), random_table(rng, cards[i], spread)))
    order = rng.permutation(len(tables))
    return graph_from_tables(cards, [tables[k] for k in order])


def random_graph(rng, n_vars, n_factors, max_arity=3, max_card=3, spread=2.0):
    cards = [int(rng.integers(1, max_card + 1)) for _ in range(n_vars)]
    tables = []
    for _ in range(n_factors):
        arity = int(rng.integers(1, min(max_arity, n_vars) + 1))
        scope = tuple(int(v) for v in rng.choice(n_vars, size=arity, replace=False))
        size = int(np.prod([cards[v] for v in scope]))
        tables.append((scope, random_table(rng, size, spread)))
    return graph_from_tables(cards, tables)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_lines():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
