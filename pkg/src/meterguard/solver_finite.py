"""Finite-horizon solver for the battery-only subproblem (no renewable).

Between two renewable arrivals the system is a battery-only chain with a full
initial charge, so episodes of known length reduce to a finite-horizon belief
DP.  One backward pass produces the value tables for every remaining depth at
once; a horizon-T solution reads its stage policies off that shared table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actions import ActionGrid
from .belief import BeliefGrid, grid_for
from .engine import DpCore
from .errors import ConfigError
from .model import Model, SystemConfig, rng_streams
from .trees import tree_totals


def no_res_config(cfg: SystemConfig) -> SystemConfig:
    """The same system with the renewable switched off."""
    return cfg.replace(p_e=0.0)


@dataclass
class DepthTable:
    """Backward-induction values and stage rules for every remaining depth.

    ``values[k]`` is the optimal expected total over k remaining slots, per
    lattice point; ``tables[k]`` holds the minimizing no-renewable rule rows
    [N, S, Y] applied when k slots remain.  A horizon-T problem uses depth
    T - t + 1 at stage t.
    """

    cfg: SystemConfig
    max_depth: int
    model: Model = field(init=False)
    grid: BeliefGrid = field(init=False)
    values: list = field(init=False)
    tables: list = field(init=False)
    init_id: int = field(init=False)

    def __post_init__(self):
        base = no_res_config(self.cfg)
        self.model = Model(base)
        self.grid = grid_for(self.model)
        core = DpCore(self.model, self.grid, base.gamma, self.model.e_probs)
        action_grid = ActionGrid.from_config(self.model)
        rng = rng_streams(base, ["action-search-finite"])["action-search-finite"]
        self.init_id = self.grid.quantize(self.model.initial_belief())
        self.values = [np.zeros(len(self.grid))]
        self.tables = [None]
        warm = None
        for depth in range(self.max_depth):
            # Early depths reshape the landscape, so search them broadly; later
            # stages track a slowly drifting optimum and the warm start plus a
            # periodic restart pass keeps them honest.
            restarts = None if (depth < 8 or depth % 5 == 0) else 0
            val, tabs = core.minimize(action_grid, self.values[-1], rng=rng, warm=warm, restarts=restarts)
            warm = tabs
            self.values.append(val)
            self.tables.append(tabs[:, :, 0, :].copy())

    def extend_to(self, depth: int):
        if depth <= self.max_depth:
            return self
        return DepthTable(self.cfg, depth)

    def objective(self, horizon: int) -> float:
        """Optimal per-slot weighted objective for the given episode length."""
        if not 1 <= horizon <= self.max_depth:
            raise ConfigError(f"horizon {horizon} outside solved depths 1..{self.max_depth}")
        return float(self.values[horizon][self.init_id]) / horizon


@dataclass
class FiniteHorizonSolution:
    """Stage rules and objective of one fixed-horizon battery-only problem."""

    horizon: int
    depth_table: DepthTable
    objective: float = field(init=False)

    def __post_init__(self):
        self.objective = self.depth_table.objective(self.horizon)

    def stage_rules(self, stage: int) -> np.ndarray:
        """No-renewable rule rows [N, S, Y] applied at the given stage (1-based)."""
        if not 1 <= stage <= self.horizon:
            raise ConfigError(f"stage {stage} outside 1..{self.horizon}")
        return self.depth_table.tables[self.horizon - stage + 1]

    def provider(self, belief_mode: str = "grid"):
        """Rule provider for tree evaluation of this solution's stages.

        Looks up the stage rule at the lattice point nearest the node belief
        and expands it to a full table (the renewable never fires in this
        subproblem, so the firing rows are never exercised; they are filled
        with the same rows to stay battery-independent at recharge instants).
        """
        grid = self.depth_table.grid
        model = self.depth_table.model

        def provide(stage, beta):
            rows = self.stage_rules(stage)[grid.quantize(beta)]
            return expand_no_res_rows(rows, model)

        return provide


def expand_no_res_rows(rows: np.ndarray, model: Model) -> np.ndarray:
    """Embed battery-only rule rows [S, Y] into a full [S, E, Y] table.

    The renewable-fires rows are taken from the full-battery rows of the same
    demand, which is both feasible (a full battery admits the same purchases)
    and independent of the pre-recharge battery.
    """
    tab = np.empty((model.n_s, model.n_e, model.n_y))
    tab[:, 0, :] = rows
    full_b = model.cfg.b_max
    for b in range(model.n_b):
        for x in range(model.n_x):
            tab[model.state_index(b, x), 1, :] = rows[model.state_index(full_b, x)]
    return tab


def finite_dp(horizon: int, cfg: SystemConfig, depth_table: DepthTable | None = None) -> FiniteHorizonSolution:
    """Solve the battery-only problem for one horizon.

    A shared DepthTable can be passed to amortize the backward pass across
    horizons; it is solved (or extended) on demand otherwise.
    """
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    if depth_table is None:
        depth_table = DepthTable(cfg, horizon)
    elif depth_table.max_depth < horizon:
        depth_table = depth_table.extend_to(horizon)
    return FiniteHorizonSolution(horizon, depth_table)


def evaluate_finite_policy(
    sol: FiniteHorizonSolution,
    truncate_at: int,
    cfg: SystemConfig | None = None,
    belief_mode: str = "grid",
):
    """Exact totals (leakage bits, cost units) over the first ``truncate_at``
    slots of the solution's stage policies.

    In "grid" mode the belief recursion snaps to the lattice exactly as the
    backward induction did, so the full-horizon totals decompose the DP
    objective; in "exact" mode the recursion is the deployed one (exact
    beliefs, lattice lookup only).
    """
    if not 1 <= truncate_at <= sol.horizon:
        raise ConfigError(f"truncate_at {truncate_at} outside 1..{sol.horizon}")
    base = no_res_config(cfg if cfg is not None else sol.depth_table.cfg)
    leak_cum, cost_cum = tree_totals(
        sol.provider(belief_mode),
        base,
        truncate_at,
        grid=sol.depth_table.grid,
        belief_mode=belief_mode,
    )
    return float(leak_cum[truncate_at]), float(cost_cum[truncate_at])
