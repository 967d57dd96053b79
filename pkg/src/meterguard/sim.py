"""Seeded Monte Carlo simulation of purchase policies.

The simulator runs the physical chain (demand, renewable, battery), draws
purchases from the policy under evaluation, and accumulates the realized
per-slot leakage terms along the exact Bayes belief recursion, so the averages
are unbiased for the information actually revealed by the deployed policy
(including any quantization mismatch in grid policies).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleTransition, ZeroProbabilityObservation
from .model import Model, SystemConfig, rng_streams

BATCH_SLOTS = 1000  # batch-means window for standard errors


@dataclass(frozen=True)
class EvalResult:
    """Per-slot performance of a policy with sampling uncertainty."""

    leakage_rate: float
    cost_rate: float
    weighted: float
    stderr_leakage: float = 0.0
    stderr_cost: float = 0.0
    stderr_weighted: float = 0.0
    slots_simulated: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        gamma = self.extras.get("gamma")
        if gamma is not None:
            expect = gamma * self.leakage_rate + (1.0 - gamma) * self.cost_rate
            if abs(expect - self.weighted) > 1e-12:
                raise ConfigError("weighted objective inconsistent with its components")

    @classmethod
    def from_rates(cls, cfg: SystemConfig, leak: float, cost: float, **kw) -> "EvalResult":
        extras = kw.pop("extras", {})
        extras.setdefault("gamma", cfg.gamma)
        weighted = cfg.gamma * leak + (1.0 - cfg.gamma) * cost
        return cls(leak, cost, weighted, extras=extras, **kw)


@dataclass
class EpisodeLog:
    """Per-slot trajectory record; identical seeds reproduce it bit for bit."""

    x: np.ndarray
    e: np.ndarray
    y: np.ndarray
    b: np.ndarray  # battery at the start of the slot, before the renewable
    step_leakage_bits: np.ndarray
    step_cost: np.ndarray

    def __len__(self):
        return len(self.x)


def write_slot_trace(log: EpisodeLog, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "e", "y", "b", "step_leak_bits", "step_cost"])
        for t in range(len(log)):
            writer.writerow(
                [
                    t + 1,
                    int(log.x[t]),
                    int(log.e[t]),
                    int(log.y[t]),
                    int(log.b[t]),
                    repr(float(log.step_leakage_bits[t])),
                    repr(float(log.step_cost[t])),
                ]
            )


def _batch_stats(samples: np.ndarray, batch: int = BATCH_SLOTS):
    """(mean, stderr) via batch means; the stderr is 0 for a single batch."""
    mean = float(samples.mean())
    n_batches = len(samples) // batch
    if n_batches < 2:
        return mean, 0.0
    trimmed = samples[: n_batches * batch].reshape(n_batches, batch).mean(axis=1)
    return mean, float(trimmed.std(ddof=1) / math.sqrt(n_batches))


def _draw(rng: np.random.Generator, probs: np.ndarray) -> int:
    u = rng.random()
    acc = 0.0
    last = 0
    for i, p in enumerate(probs):
        if p <= 0.0:
            continue
        acc += p
        last = i
        if u < acc:
            return i
    return last  # float round-off in the row sum lands on the last supported value


def _result_from_arrays(cfg, leaks, costs, extras):
    leak, se_l = _batch_stats(leaks)
    cost, se_c = _batch_stats(costs)
    _, se_w = _batch_stats(cfg.gamma * leaks + (1.0 - cfg.gamma) * costs)
    return EvalResult.from_rates(
        cfg,
        leak,
        cost,
        stderr_leakage=se_l,
        stderr_cost=se_c,
        stderr_weighted=se_w,
        slots_simulated=len(leaks),
        extras=extras,
    )


def simulate(policy, cfg: SystemConfig, total_slots: int, streams=None, keep_log: bool = False):
    """Long-run rates of a stationary policy over one simulated chain.

    ``policy.table(belief, stage)`` must return a full rule table [S, E, Y];
    the stage argument counts slots from 1 and stationary policies ignore it.
    Leakage accumulates the realized log-ratio of the drawn purchase's
    probability under the true state against its probability under the
    tracked belief.
    """
    if total_slots < 1:
        raise ConfigError("total_slots must be >= 1")
    model = Model(cfg)
    streams = rng_streams(cfg, ["demand", "renewable", "policy"]) if streams is None else streams
    r_x, r_e, r_pol = streams["demand"], streams["renewable"], streams["policy"]
    p_x = model.p_x
    n_x = model.n_x
    b = cfg.b_max
    belief = model.initial_belief()
    leaks = np.empty(total_slots)
    costs = np.empty(total_slots)
    log = (
        EpisodeLog(*(np.empty(total_slots, dtype=np.int64) for _ in range(4)), leaks, costs)
        if keep_log
        else None
    )
    next_b = model.next_b
    for t in range(total_slots):
        x = _draw(r_x, p_x)
        e_fires = r_e.random() < cfg.p_e
        ei = 1 if e_fires else 0
        e = model.e_values[ei]
        tab = policy.table(belief, t + 1)
        s = b * n_x + x
        y = _draw(r_pol, tab[s, ei])
        if not model.feasible[s, ei, y]:
            raise InfeasibleTransition(f"policy drew infeasible purchase y={y} at (b={b}, x={x}, e={e})")
        col = tab[:, ei, y]
        mix = float(belief @ col)
        if mix <= 0.0:
            raise ZeroProbabilityObservation("belief assigns zero mass to the drawn observation")
        leaks[t] = math.log2(tab[s, ei, y] / mix)
        costs[t] = float(y)
        if keep_log:
            log.x[t], log.e[t], log.y[t], log.b[t] = x, e, y, b
        # Inline Bayes update: battery posterior pushed through the transition,
        # demand refreshed independently.
        w = belief * col
        batt = np.zeros(model.n_b)
        nb_col = next_b[:, ei, y]
        for si in range(model.n_s):
            if w[si] > 0.0:
                batt[nb_col[si]] += w[si]
        batt /= mix
        belief = (batt[:, None] * p_x[None, :]).reshape(model.n_s)
        b = int(next_b[s, ei, y])
    result = _result_from_arrays(cfg, leaks, costs, {"mode": "monte-carlo"})
    return (result, log) if keep_log else result


def simulate_episodic(policy, cfg: SystemConfig, episodes: int, streams=None, keep_log: bool = False):
    """Rates of an episode-structured policy across renewable recharge cycles.

    Episodes start at slot 1 and at every renewable arrival; the belief then
    resets to battery-full times the demand distribution and ``policy.table``
    is consulted with the within-episode stage (1-based).  The accounting
    charges the recharge slot to the new episode, which requires the policy's
    recharge-slot rows to ignore the pre-recharge battery; that is checked up
    front.
    """
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    model = Model(cfg)
    streams = rng_streams(cfg, ["demand", "renewable", "policy"]) if streams is None else streams
    r_x, r_e, r_pol = streams["demand"], streams["renewable"], streams["policy"]
    p_x = model.p_x
    n_x = model.n_x
    init_belief = model.initial_belief()
    leaks, costs = [], []
    log_rows = [] if keep_log else None
    next_b = model.next_b
    episode_lengths = []
    b = cfg.b_max
    belief = init_belief.copy()
    stage = 1
    done_episodes = 0
    length = 0
    t = 0
    while done_episodes < episodes:
        t += 1
        x = _draw(r_x, p_x)
        if t == 1:
            e_fires = True  # the chain starts at a recharge instant
        else:
            e_fires = r_e.random() < cfg.p_e
        ei = 1 if e_fires else 0
        e = model.e_values[ei]
        if e_fires and t > 1:
            episode_lengths.append(length)
            done_episodes += 1
            if done_episodes >= episodes:
                break
            length = 0
            stage = 1
            belief = init_belief.copy()
        tab = policy.table(belief, stage)
        if stage == 1:
            _check_recharge_rows(tab, model)
        # Rule lookup at the effective (post-renewable) battery: within an
        # episode that battery is the physical one; at a recharge it is full.
        b_eff = cfg.b_max if e_fires else b
        s = b_eff * n_x + x
        y = _draw(r_pol, tab[s, ei])
        if not model.feasible[s, ei, y]:
            raise InfeasibleTransition(f"policy drew infeasible purchase y={y} at (b={b_eff}, x={x}, e={e})")
        col = tab[:, ei, y]
        mix = float(belief @ col)
        if mix <= 0.0:
            raise ZeroProbabilityObservation("belief assigns zero mass to the drawn observation")
        leaks.append(math.log2(tab[s, ei, y] / mix))
        costs.append(float(y))
        if keep_log:
            log_rows.append((x, e, y, b))
        w = belief * col
        batt = np.zeros(model.n_b)
        nb_col = next_b[:, ei, y]
        for si in range(model.n_s):
            if w[si] > 0.0:
                batt[nb_col[si]] += w[si]
        batt /= mix
        belief = (batt[:, None] * p_x[None, :]).reshape(model.n_s)
        b = int(next_b[s, ei, y])
        stage += 1
        length += 1
    leaks = np.array(leaks)
    costs = np.array(costs)
    extras = {
        "mode": "monte-carlo-episodic",
        "episodes": len(episode_lengths),
        "mean_episode_length": float(np.mean(episode_lengths)) if episode_lengths else float("nan"),
    }
    result = _result_from_arrays(cfg, leaks, costs, extras)
    if keep_log:
        rows = np.array(log_rows, dtype=np.int64)
        log = EpisodeLog(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], leaks, costs)
        return result, log
    return result


def _check_recharge_rows(tab: np.ndarray, model: Model):
    """Episodic accounting requires recharge-slot rules not to leak the
    pre-recharge battery: rows at the firing renewable must match across b."""
    rows = tab[:, 1, :].reshape(model.n_b, model.n_x, model.n_y)
    if not np.allclose(rows, rows[0][None, :, :], atol=1e-12):
        raise ConfigError(
            "recharge-slot rules depend on the pre-recharge battery; "
            "evaluate this policy with simulate() instead"
        )
