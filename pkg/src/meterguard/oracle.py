"""Brute-force ground truth for leakage at tiny horizons.

Enumerates every trajectory (initial battery, demands, renewables, purchases)
with its exact probability, builds the joint table, and computes mutual
information between the hidden variables and the meter readings by direct
summation.  Everything else in the package that claims to measure leakage is
tested against this module.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .belief import Belief, belief_update
from .errors import HorizonTooLarge
from .model import Model, SystemConfig

LOG2 = math.log(2.0)


class TrajectoryPolicy:
    """Policy presented as explicit per-history conditional tables.

    Subclasses return, for slot ``t`` (1-based) and the observable history
    (purchases and renewables before t), a full rule table [S, E, Y].
    """

    def rule_for(self, t: int, y_hist: tuple, e_hist: tuple) -> np.ndarray:
        raise NotImplementedError


class ConstantPolicy(TrajectoryPolicy):
    """History-independent rule."""

    def __init__(self, table: np.ndarray):
        self.table = np.asarray(table, dtype=float)

    def rule_for(self, t, y_hist, e_hist):
        return self.table


class BeliefTrackingPolicy(TrajectoryPolicy):
    """Policy driven by a belief tracked from the observable history.

    ``chooser(belief, t)`` maps the tracked belief (an [S] vector) and the
    1-based slot index to a rule table.  The belief recursion is the exact
    Bayes update; histories with zero probability never reach the chooser.
    """

    def __init__(self, model: Model, chooser):
        self.model = model
        self.chooser = chooser
        self._cache: dict = {}

    def rule_for(self, t, y_hist, e_hist):
        key = (y_hist, e_hist)
        beta = self._belief(key)
        return self.chooser(beta, t)

    def _belief(self, key):
        got = self._cache.get(key)
        if got is not None:
            return got
        y_hist, e_hist = key
        if not y_hist:
            beta = self.model.initial_belief()
        else:
            prev = (y_hist[:-1], e_hist[:-1])
            beta_prev = self._belief(prev)
            rule = self.chooser(beta_prev, len(y_hist))
            beta = belief_update(Belief(beta_prev), rule, y_hist[-1], e_hist[-1], self.model).probs
        self._cache[key] = beta
        return beta


@dataclass
class JointTable:
    """Exact joint distribution over full trajectories.

    Keys are (b1, x_vec, e_vec, y_vec) tuples; values are probabilities.
    """

    horizon: int
    model: Model
    entries: dict = field(default_factory=dict)

    def total(self) -> float:
        return sum(self.entries.values())

    def marginal(self, selector) -> dict:
        out = defaultdict(float)
        for key, p in self.entries.items():
            out[selector(*key)] += p
        return out


def build_joint(policy: TrajectoryPolicy, horizon: int, cfg: SystemConfig, init_b=None) -> JointTable:
    """Enumerate the joint distribution of (B1, X^T, E^T, Y^T) under the policy."""
    model = Model(cfg)
    n_traj = model.n_b * (model.n_x * model.n_e * model.n_y) ** horizon
    if n_traj > cfg.node_budget:
        raise HorizonTooLarge(f"{n_traj} trajectories exceed the node budget {cfg.node_budget}")
    if init_b is None:
        init = {cfg.b_max: 1.0}
    else:
        init = {b: p for b, p in enumerate(init_b) if p > 0.0}
    table = JointTable(horizon, model)
    rule_cache: dict = {}

    def rule(t, y_hist, e_hist):
        key = (t, y_hist, e_hist)
        got = rule_cache.get(key)
        if got is None:
            got = policy.rule_for(t, y_hist, e_hist)
            rule_cache[key] = got
        return got

    def recurse(t, b, logp, xs, es, ys):
        if t > horizon:
            key = (xs[0], xs[1:], es, ys)  # (b1, x_vec, e_vec, y_vec)
            table.entries[key] = table.entries.get(key, 0.0) + math.exp(logp)
            return
        tab = rule(t, ys, es)
        for x in range(model.n_x):
            px = model.p_x[x]
            if px <= 0.0:
                continue
            s = model.state_index(b, x)
            for ei, e in enumerate(model.e_values):
                pe = model.e_probs[ei]
                if pe <= 0.0:
                    continue
                for y in range(model.n_y):
                    pa = tab[s, ei, y]
                    if pa <= 0.0:
                        continue
                    assert model.feasible[s, ei, y], "policy places mass on an infeasible purchase"
                    nb = model.next_b[s, ei, y]
                    recurse(
                        t + 1,
                        nb,
                        logp + math.log(px) + math.log(pe) + math.log(pa),
                        xs + (x,),
                        es + (e,),
                        ys + (y,),
                    )

    for b1, p1 in init.items():
        recurse(1, b1, math.log(p1), (b1,), (), ())
    return table


def _mi_from_groups(entries, hidden_of, observed_of, given_of) -> float:
    """I(hidden; observed | given) in bits from a joint dictionary."""
    joint = defaultdict(float)
    hg = defaultdict(float)
    og = defaultdict(float)
    g = defaultdict(float)
    for key, p in entries.items():
        h, o, c = hidden_of(key), observed_of(key), given_of(key)
        joint[(h, o, c)] += p
        hg[(h, c)] += p
        og[(o, c)] += p
        g[c] += p
    total = 0.0
    for (h, o, c), p in joint.items():
        if p <= 0.0:
            continue
        total += p * math.log(p * g[c] / (hg[(h, c)] * og[(o, c)])) / LOG2
    return total


def exact_leakage(
    policy: TrajectoryPolicy,
    horizon: int,
    cfg: SystemConfig,
    conditional_on_e: bool = True,
    init_b=None,
) -> float:
    """Exact per-slot leakage in bits: I(X^T, B1; Y^T | E^T), or the
    unconditional variant I(X^T, B1; Y^T) when ``conditional_on_e`` is off."""
    table = build_joint(policy, horizon, cfg, init_b=init_b)
    if conditional_on_e:
        mi = _mi_from_groups(
            table.entries,
            lambda key: (key[0], key[1]),
            lambda key: key[3],
            lambda key: key[2],
        )
    else:
        mi = _mi_from_groups(
            table.entries,
            lambda key: (key[0], key[1]),
            lambda key: key[3],
            lambda key: (),
        )
    return mi / horizon


def exact_cost(policy: TrajectoryPolicy, horizon: int, cfg: SystemConfig, init_b=None) -> float:
    """Exact expected purchases per slot."""
    table = build_joint(policy, horizon, cfg, init_b=init_b)
    total = sum(p * sum(key[3]) for key, p in table.entries.items())
    return total / horizon


def exact_objective(policy: TrajectoryPolicy, horizon: int, cfg: SystemConfig, init_b=None):
    """Exact (leakage rate, cost rate, weighted objective) triple."""
    leak = exact_leakage(policy, horizon, cfg, init_b=init_b)
    cost = exact_cost(policy, horizon, cfg, init_b=init_b)
    return leak, cost, cfg.gamma * leak + (1.0 - cfg.gamma) * cost


def additive_leakage_decomposition(policy: TrajectoryPolicy, horizon: int, cfg: SystemConfig, init_b=None):
    """Per-slot terms I(X_t, B_t; E_t, Y_t | Y^{t-1}, E^{t-1}) from the joint.

    The battery at slot t is reconstructed from the trajectory prefix, so the
    sum of these terms can be compared against the block mutual information.
    """
    table = build_joint(policy, horizon, cfg, init_b=init_b)
    model = table.model
    terms = []
    for t in range(1, horizon + 1):
        def battery_at(key, upto=t):
            b = key[0]
            for i in range(upto - 1):
                ei = model.e_index(key[2][i])
                b = model.next_b[model.state_index(b, key[1][i]), ei, key[3][i]]
            return b

        terms.append(
            _mi_from_groups(
                table.entries,
                lambda key: (key[1][t - 1], battery_at(key)),
                lambda key: (key[2][t - 1], key[3][t - 1]),
                lambda key: (key[2][: t - 1], key[3][: t - 1]),
            )
        )
    return terms
