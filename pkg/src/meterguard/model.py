"""Physical system model: alphabets, battery dynamics, and the demand/renewable processes.

The household draws energy for an i.i.d. demand ``x`` from three sources: a
finite battery ``b`` (levels ``0..b_max``), a renewable process that fully
recharges the battery with probability ``p_e`` per slot, and metered grid
purchases ``y``.  Demand must always be met and energy must never be wasted,
which constrains the purchases available in each state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .errors import ConfigError, InfeasibleTransition, NoFeasibleAction

PROB_TOL = 1e-12


@dataclass(frozen=True)
class SystemConfig:
    """All problem parameters plus solver knobs.

    Alphabets are contiguous integer ranges starting at 0: demand
    ``{0..x_max}``, purchases ``{0..y_max}``, battery ``{0..b_max}``.  The
    renewable arrival is all-or-nothing: ``b_max`` units with probability
    ``p_e``, else 0.
    """

    x_max: int = 1
    y_max: int = 1
    b_max: int = 2
    p_x: tuple = (0.5, 0.5)
    p_e: float = 0.5
    gamma: float = 0.5
    belief_denominator: int = 10
    action_steps: int = 10
    vi_tolerance: float = 1e-6
    vi_max_iters: int = 3000
    seed: int = 20260301
    action_search: str = "coordinate"  # or "exhaustive"
    restarts: int = 5
    node_budget: int = 500_000

    def __post_init__(self):
        if self.x_max < 1 or self.y_max < 1 or self.b_max < 1:
            raise ConfigError("x_max, y_max and b_max must all be >= 1")
        if self.y_max < self.x_max:
            # Demand must be satisfiable from the grid alone when the battery
            # is empty; smaller purchase alphabets are rejected up front.
            raise ConfigError(f"y_max={self.y_max} < x_max={self.x_max} admits unmeetable demand")
        p_x = tuple(float(p) for p in self.p_x)
        object.__setattr__(self, "p_x", p_x)
        if len(p_x) != self.x_max + 1:
            raise ConfigError(f"p_x must have {self.x_max + 1} entries, got {len(p_x)}")
        if any(p < 0.0 for p in p_x):
            raise ConfigError("p_x entries must be non-negative")
        if abs(sum(p_x) - 1.0) > PROB_TOL:
            raise ConfigError(f"p_x must sum to 1 within {PROB_TOL}, got {sum(p_x)!r}")
        if not 0.0 <= self.p_e <= 1.0:
            raise ConfigError(f"p_e must lie in [0,1], got {self.p_e}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0,1], got {self.gamma}")
        if self.belief_denominator < 1:
            raise ConfigError("belief_denominator must be a positive integer")
        if self.action_steps < 1:
            raise ConfigError("action_steps must be a positive integer")
        if self.vi_tolerance <= 0.0:
            raise ConfigError("vi_tolerance must be positive")
        if self.vi_max_iters < 1:
            raise ConfigError("vi_max_iters must be a positive integer")
        if self.action_search not in ("coordinate", "exhaustive"):
            raise ConfigError(f"unknown action_search {self.action_search!r}")
        if self.restarts < 0:
            raise ConfigError("restarts must be >= 0")
        if self.node_budget < 1:
            raise ConfigError("node_budget must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **kw) -> "SystemConfig":
        merged = self.to_dict()
        merged.update(kw)
        return SystemConfig.from_dict(merged)


@dataclass(frozen=True)
class JointState:
    """Battery level and current demand, the solver's joint state."""

    b: int
    x: int

    def validate(self, cfg: SystemConfig):
        if not 0 <= self.b <= cfg.b_max:
            raise ConfigError(f"battery level {self.b} outside 0..{cfg.b_max}")
        if not 0 <= self.x <= cfg.x_max:
            raise ConfigError(f"demand {self.x} outside 0..{cfg.x_max}")


@dataclass(frozen=True)
class RenewableRealization:
    """Renewable arrival for one slot: either nothing or a full recharge."""

    e: int

    def validate(self, cfg: SystemConfig):
        if self.e not in (0, cfg.b_max):
            raise ConfigError(f"renewable arrival must be 0 or {cfg.b_max}, got {self.e}")


def battery_update(b: int, x: int, y: int, e: int, cfg: SystemConfig) -> int:
    """Next battery level: the renewable is applied first, then the purchase covers demand.

    Raises InfeasibleTransition when demand would go unmet or energy would be
    wasted (battery overflow), both of which are forbidden.
    """
    nxt = min(e + b, cfg.b_max) + y - x
    if nxt < 0:
        raise InfeasibleTransition(f"demand unmet at (b={b}, x={x}, y={y}, e={e})")
    if nxt > cfg.b_max:
        raise InfeasibleTransition(f"battery overflow at (b={b}, x={x}, y={y}, e={e})")
    return nxt


def feasible_purchases(b: int, x: int, e: int, cfg: SystemConfig) -> tuple:
    """All purchases that keep the next battery level inside ``0..b_max``."""
    charged = min(e + b, cfg.b_max)
    ys = tuple(y for y in range(cfg.y_max + 1) if 0 <= charged + y - x <= cfg.b_max)
    if not ys:
        raise NoFeasibleAction(f"no feasible purchase at (b={b}, x={x}, e={e})")
    return ys


def sample_demand(rng: np.random.Generator, cfg: SystemConfig, size=None):
    """Draw demand(s) from the demand distribution."""
    return rng.choice(cfg.x_max + 1, size=size, p=np.asarray(cfg.p_x))


def sample_renewable(rng: np.random.Generator, cfg: SystemConfig, size=None):
    """Draw renewable arrival(s): ``b_max`` with probability ``p_e``, else 0."""
    if size is None:
        return cfg.b_max if rng.random() < cfg.p_e else 0
    return np.where(rng.random(size) < cfg.p_e, cfg.b_max, 0)


def demand_entropy_bits(cfg: SystemConfig) -> float:
    """Shannon entropy of one demand draw, in bits."""
    p = np.asarray(cfg.p_x)
    nz = p[p > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def demand_mean(cfg: SystemConfig) -> float:
    """Expected demand per slot, in energy units."""
    p = np.asarray(cfg.p_x)
    return float((np.arange(len(p)) * p).sum())


def rng_streams(cfg: SystemConfig, names: Sequence[str]) -> dict:
    """Independent, reproducible RNG streams derived from the master seed.

    Each named concern (demand, renewable, policy randomization, ...) owns its
    own stream so that adding randomness to one concern never perturbs the
    draws of another.
    """
    children = np.random.SeedSequence(cfg.seed).spawn(len(names))
    return {name: np.random.default_rng(seq) for name, seq in zip(names, children)}


@dataclass
class Model:
    """Precomputed index tables for one configuration.

    States are indexed row-major over (b, x): ``s = b * (x_max + 1) + x``.
    Renewable realizations are indexed 0 -> no arrival, 1 -> full recharge.
    """

    cfg: SystemConfig
    n_b: int = field(init=False)
    n_x: int = field(init=False)
    n_y: int = field(init=False)
    n_s: int = field(init=False)
    n_e: int = field(init=False)
    e_values: tuple = field(init=False)
    e_probs: np.ndarray = field(init=False)
    p_x: np.ndarray = field(init=False)
    feasible: np.ndarray = field(init=False)  # bool [n_s, n_e, n_y]
    next_b: np.ndarray = field(init=False)  # int [n_s, n_e, n_y], -1 where infeasible
    states: list = field(init=False)

    def __post_init__(self):
        cfg = self.cfg
        self.n_b = cfg.b_max + 1
        self.n_x = cfg.x_max + 1
        self.n_y = cfg.y_max + 1
        self.n_s = self.n_b * self.n_x
        self.e_values = (0, cfg.b_max)
        self.n_e = len(self.e_values)
        self.e_probs = np.array([1.0 - cfg.p_e, cfg.p_e])
        self.p_x = np.asarray(cfg.p_x, dtype=float)
        self.states = [(b, x) for b in range(self.n_b) for x in range(self.n_x)]
        feas = np.zeros((self.n_s, self.n_e, self.n_y), dtype=bool)
        nxt = np.full((self.n_s, self.n_e, self.n_y), -1, dtype=np.int64)
        for s, (b, x) in enumerate(self.states):
            for ei, e in enumerate(self.e_values):
                charged = min(e + b, cfg.b_max)
                for y in range(self.n_y):
                    nb = charged + y - x
                    if 0 <= nb <= cfg.b_max:
                        feas[s, ei, y] = True
                        nxt[s, ei, y] = nb
        self.feasible = feas
        self.next_b = nxt

    def state_index(self, b: int, x: int) -> int:
        return b * self.n_x + x

    def e_index(self, e: int) -> int:
        try:
            return self.e_values.index(e)
        except ValueError:
            raise ConfigError(f"renewable arrival must be one of {self.e_values}, got {e}") from None

    def feasible_set(self, s: int, ei: int) -> np.ndarray:
        return np.flatnonzero(self.feasible[s, ei])

    def forced_rows(self) -> dict:
        """Rows (s, ei) with a single feasible purchase, mapped to that purchase."""
        out = {}
        for s in range(self.n_s):
            for ei in range(self.n_e):
                ys = self.feasible_set(s, ei)
                if len(ys) == 1:
                    out[(s, ei)] = int(ys[0])
        return out

    def free_rows(self) -> list:
        """Rows (s, ei) with more than one feasible purchase, in scan order."""
        return [
            (s, ei)
            for s in range(self.n_s)
            for ei in range(self.n_e)
            if len(self.feasible_set(s, ei)) > 1
        ]

    def initial_belief(self) -> np.ndarray:
        """Belief at a recharge instant: battery full for sure, fresh demand draw."""
        beta = np.zeros(self.n_s)
        for x in range(self.n_x):
            beta[self.state_index(self.cfg.b_max, x)] = self.p_x[x]
        return beta
