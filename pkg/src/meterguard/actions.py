"""Discretized randomized purchase rules and canonical baseline rules.

The optimizers never search the continuum of randomized rules: each
(state, renewable) row is restricted to probability vectors on a 1/Q grid over
its feasible purchases.  Rows with a single feasible purchase are forced and
carry exactly one candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .belief import ActionRule, _compositions
from .model import Model


def row_candidates(model: Model, s: int, ei: int, steps: int) -> np.ndarray:
    """All grid distributions for one row, embedded over the full purchase axis.

    Enumeration is lexicographic over the mass vector read from the largest
    feasible purchase down, so the first candidate concentrates on the
    smallest feasible purchase and ties in any argmin prefer cheap, quiet
    rules.
    """
    ys = model.feasible_set(s, ei)
    combos = np.array(list(_compositions(steps, len(ys))), dtype=float) / steps
    out = np.zeros((len(combos), model.n_y))
    out[:, ys[::-1]] = combos
    return out


@dataclass
class ActionGrid:
    """Candidate rule rows on the 1/Q probability grid plus the search strategy."""

    model: Model
    steps: int
    strategy: str = "coordinate"
    restarts: int = 5
    candidates: dict = field(init=False)  # (s, ei) -> [n_c, n_y]
    free_rows: list = field(init=False)
    forced: dict = field(init=False)

    def __post_init__(self):
        self.candidates = {
            (s, ei): row_candidates(self.model, s, ei, self.steps)
            for s in range(self.model.n_s)
            for ei in range(self.model.n_e)
        }
        self.free_rows = self.model.free_rows()
        self.forced = self.model.forced_rows()

    @classmethod
    def from_config(cls, model: Model) -> "ActionGrid":
        cfg = model.cfg
        return cls(model, cfg.action_steps, cfg.action_search, cfg.restarts)

    def base_table(self) -> np.ndarray:
        """Table with every row at its first candidate (mass on the smallest purchase)."""
        t = np.zeros((self.model.n_s, self.model.n_e, self.model.n_y))
        for (s, ei), cands in self.candidates.items():
            t[s, ei] = cands[0]
        return t

    def random_table(self, rng: np.random.Generator) -> np.ndarray:
        """Table with every free row at a uniformly drawn candidate."""
        t = self.base_table()
        for s, ei in self.free_rows:
            cands = self.candidates[(s, ei)]
            t[s, ei] = cands[rng.integers(len(cands))]
        return t


def deterministic_rule(model: Model, chooser) -> ActionRule:
    """Rule that deterministically picks ``chooser(b, x, e, feasible_set)`` in each row."""
    t = np.zeros((model.n_s, model.n_e, model.n_y))
    for s, (b, x) in enumerate(model.states):
        for ei, e in enumerate(model.e_values):
            ys = model.feasible_set(s, ei)
            t[s, ei, chooser(b, x, e, ys)] = 1.0
    return ActionRule(t).validate(model)


def min_purchase_rule(model: Model) -> ActionRule:
    """Always buy as little as feasibility allows."""
    return deterministic_rule(model, lambda b, x, e, ys: int(ys[0]))


def max_purchase_rule(model: Model) -> ActionRule:
    """Always buy as much as feasibility allows."""
    return deterministic_rule(model, lambda b, x, e, ys: int(ys[-1]))


def reveal_rule(model: Model) -> ActionRule:
    """Buy exactly the demand, leaving the battery untouched; always feasible."""
    return deterministic_rule(model, lambda b, x, e, ys: x)


def uniform_rule(model: Model) -> ActionRule:
    """Uniform distribution over the feasible purchases of each row."""
    t = np.zeros((model.n_s, model.n_e, model.n_y))
    for s in range(model.n_s):
        for ei in range(model.n_e):
            ys = model.feasible_set(s, ei)
            t[s, ei, ys] = 1.0 / len(ys)
    return ActionRule(t).validate(model)
