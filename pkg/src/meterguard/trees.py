"""Exact expectation of per-slot leakage and cost over the observation tree.

Walks every (purchase, renewable) observation sequence with its probability,
carrying the belief recursion, and accumulates expected totals per depth.
Nodes with identical beliefs at the same depth are merged, which keeps
deterministic policies cheap; the node budget bounds the worst case.
"""

from __future__ import annotations

import numpy as np

from .belief import belief_update, per_step_cost, per_step_leakage
from .errors import HorizonTooLarge
from .model import Model, SystemConfig


def tree_totals(provider, cfg: SystemConfig, horizon: int, grid=None, belief_mode: str = "exact"):
    """Cumulative expected (leakage bits, cost units) over the first t slots,
    for t = 1..horizon, as two arrays of length horizon + 1 (index 0 is 0).

    ``provider(stage, belief)`` returns the rule table for a 1-based stage.
    In "grid" mode every updated belief is snapped to the lattice before it
    becomes a node, reproducing the propagation a lattice DP performs; in
    "exact" mode beliefs follow the exact Bayes recursion (the deployed
    behavior of a policy that quantizes only for rule lookup).
    """
    if belief_mode not in ("exact", "grid"):
        raise ValueError(f"unknown belief mode {belief_mode!r}")
    if belief_mode == "grid" and grid is None:
        raise ValueError("grid mode needs the belief grid")
    model = Model(cfg)
    start = model.initial_belief()
    if belief_mode == "grid":
        start = grid.points[grid.quantize(start)]
    leak_cum = np.zeros(horizon + 1)
    cost_cum = np.zeros(horizon + 1)
    level = {start.tobytes(): (start, 1.0)}
    nodes = 0
    for stage in range(1, horizon + 1):
        leak_cum[stage] = leak_cum[stage - 1]
        cost_cum[stage] = cost_cum[stage - 1]
        nxt: dict = {}
        for beta, prob in level.values():
            nodes += 1
            if nodes > cfg.node_budget:
                raise HorizonTooLarge(
                    f"observation tree exceeded the node budget {cfg.node_budget} at depth {stage}"
                )
            tab = provider(stage, beta)
            leak_cum[stage] += prob * per_step_leakage(beta, tab, model)
            cost_cum[stage] += prob * per_step_cost(beta, tab, model)
            if stage == horizon:
                continue
            for ei in range(model.n_e):
                pe = model.e_probs[ei]
                if pe <= 0.0:
                    continue
                for y in range(model.n_y):
                    pred = float(beta @ tab[:, ei, y])
                    if pred <= 0.0:
                        continue
                    child = belief_update(beta, tab, y, model.e_values[ei], model).probs
                    if belief_mode == "grid":
                        child = grid.points[grid.quantize(child)]
                    key = child.tobytes()
                    got = nxt.get(key)
                    if got is None:
                        nxt[key] = (child, prob * pe * pred)
                    else:
                        nxt[key] = (got[0], got[1] + prob * pe * pred)
        level = nxt
    return leak_cum, cost_cum
