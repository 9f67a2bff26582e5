"""Discrete belief propagation with residual-based dynamic schedules."""

from .exact import ExactResult, avg_variable_kl, enumerate_marginals, eliminate_marginals
from .factor_graph import (
    Factor, FactorGraph, VariableSpec, build_graph, gen_potts_grid, graph_from_tables,
    load_model, save_model,
)
from .propagation import (
    MessageState, apply_update, bethe_log_z, compute_update, dynamic_range,
    factor_belief, factor_change_bound, init_uniform, initial_priority, message_kl,
    residual, variable_belief,
)
from .pqueue import IndexedPriorityQueue
from .schedulers import (
    ResidualLedger, RunOptions, RunStats, run, run_rbp0l, run_rbp1l, run_round_robin,
    run_synchronous, warm_restart_priorities,
)

__version__ = "0.1.0"
