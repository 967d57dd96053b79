"""Belief state over (battery, demand), its Bayes update, simplex-lattice
quantization, and the per-slot leakage and cost functionals.

The observer sees purchases and renewable arrivals but never the demand or the
battery, so it carries a posterior ("belief") over the joint state.  Leakage
per slot is the mutual information between the hidden state and the purchase
given the renewable arrival, computed from the belief and the randomized
purchase rule; cost per slot is the expected purchase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ZeroProbabilityObservation
from .model import Model, PROB_TOL

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class Belief:
    """Probability vector over joint states, row-major over (b, x)."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))

    def validate(self):
        p = self.probs
        if p.ndim != 1:
            raise ConfigError("belief must be a flat vector")
        if np.any(p < 0.0):
            raise ConfigError("belief entries must be non-negative")
        if abs(float(p.sum()) - 1.0) > PROB_TOL:
            raise ConfigError(f"belief must sum to 1 within {PROB_TOL}, got {p.sum()!r}")
        return self


@dataclass(frozen=True)
class ActionRule:
    """Conditional purchase distribution per (state, renewable) row.

    ``table[s, ei, y]`` is the probability of purchasing ``y`` in state ``s``
    when the renewable realization has index ``ei``.  Rows must be proper
    distributions supported on the feasible purchases only.
    """

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", np.asarray(self.table, dtype=float))

    def validate(self, model: Model):
        t = self.table
        if t.shape != (model.n_s, model.n_e, model.n_y):
            raise ConfigError(f"rule table shape {t.shape} != {(model.n_s, model.n_e, model.n_y)}")
        if np.any(t < 0.0):
            raise ConfigError("rule probabilities must be non-negative")
        sums = t.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > PROB_TOL):
            raise ConfigError("every rule row must sum to 1")
        if np.any(t[~model.feasible] > 0.0):
            raise ConfigError("rule places probability on an infeasible purchase")
        return self


def _compositions(total: int, parts: int):
    """All non-negative integer vectors of the given length summing to total,
    in ascending lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


@dataclass
class BeliefGrid:
    """Uniform lattice on the belief simplex with denominator M.

    Grid points are the vectors k/M with k a non-negative integer vector
    summing to M, stored in ascending lexicographic order of k.  Integer
    vectors are the source of truth; the float coordinates are derived.
    """

    n_states: int
    denominator: int
    lattice: np.ndarray = field(init=False)  # int [N, n_states]
    points: np.ndarray = field(init=False)  # float [N, n_states]
    _codes: np.ndarray = field(init=False)
    _powers: np.ndarray = field(init=False)

    def __post_init__(self):
        m, s = self.denominator, self.n_states
        if m < 1 or s < 1:
            raise ConfigError("grid needs a positive denominator and state count")
        k = np.array(list(_compositions(m, s)), dtype=np.int64)
        expect = math.comb(m + s - 1, s - 1)
        if len(k) != expect:
            raise AssertionError(f"lattice size {len(k)} != C({m + s - 1},{s - 1})")
        if (m + 1) ** s >= 2**53:
            raise ConfigError("belief grid too large to index; reduce M or the state space")
        self.lattice = k
        self.points = k.astype(float) / m
        # Most significant digit first so codes ascend with lexicographic order.
        self._powers = (m + 1) ** np.arange(s - 1, -1, -1, dtype=np.int64)
        self._powers_f = self._powers.astype(np.float64)
        self._codes = k @ self._powers
        if np.any(np.diff(self._codes) <= 0):
            raise AssertionError("lattice codes are not strictly increasing")
        # Dense code -> id table when affordable; searchsorted fallback otherwise.
        span = (m + 1) ** s
        if span <= 20_000_000:
            lut = np.full(span, -1, dtype=np.int32)
            lut[self._codes] = np.arange(len(k), dtype=np.int32)
            self._lut = lut
        else:
            self._lut = None

    def __len__(self):
        return len(self.lattice)

    def id_of(self, k: np.ndarray) -> int:
        code = int(np.asarray(k, dtype=np.int64) @ self._powers)
        idx = int(np.searchsorted(self._codes, code))
        if idx >= len(self._codes) or self._codes[idx] != code:
            raise ConfigError("vector is not a lattice point")
        return idx

    def round_batch(self, beliefs: np.ndarray) -> np.ndarray:
        """Closest lattice vectors (L1) for a batch of beliefs, as integer rows.

        Ties are broken toward the lexicographically smallest lattice vector.
        Rounding puts each coordinate at floor(M*beta) and then distributes the
        remaining mass to the coordinates with the largest fractional parts,
        which is exact for this separable objective.
        """
        b = np.atleast_2d(np.asarray(beliefs, dtype=float))
        m, s = self.denominator, self.n_states
        z = np.clip(b * m, 0.0, m)
        kf = np.floor(z).astype(np.int64)
        r = z - kf
        deficit = m - kf.sum(axis=1)
        # Distribute the missing mass to the largest fractional parts; on ties
        # prefer the later coordinate (incrementing it keeps earlier
        # coordinates smaller, hence lex-smaller).  Sorting the reversed rows
        # makes the stable argsort break ties exactly that way.
        rev = r[:, ::-1]
        order = np.argsort(-rev, axis=1, kind="stable")
        take = np.arange(s)[None, :] < np.maximum(deficit, 0)[:, None]
        inc_rev = np.zeros_like(kf)
        np.put_along_axis(inc_rev, order, take.astype(np.int64), axis=1)
        k = kf + inc_rev[:, ::-1]
        # Normalization noise can push the floor sum past M; every unit removed
        # costs the same, so drop from the earliest positive coordinates to stay
        # lexicographically smallest.
        if np.any(deficit < 0):
            for row in np.flatnonzero(deficit < 0):
                extra = -int(deficit[row])
                for i in range(s):
                    while extra > 0 and k[row, i] > 0:
                        k[row, i] -= 1
                        extra -= 1
                    if extra == 0:
                        break
        return k

    def quantize_batch(self, beliefs: np.ndarray) -> np.ndarray:
        """Dense ids of the closest lattice points for a batch of beliefs."""
        k = self.round_batch(beliefs)
        codes = (k.astype(np.float64) @ self._powers_f).astype(np.int64)
        if self._lut is not None:
            return self._lut[codes].astype(np.int64)
        return np.searchsorted(self._codes, codes)

    def quantize(self, belief) -> int:
        probs = belief.probs if isinstance(belief, Belief) else np.asarray(belief, dtype=float)
        return int(self.quantize_batch(probs[None, :])[0])

    def quantize_one(self, vec) -> int:
        """Scalar fast path of quantize for hot simulation loops."""
        m, s = self.denominator, self.n_states
        k = [0] * s
        r = [0.0] * s
        total = 0
        for i in range(s):
            z = vec[i] * m
            if z < 0.0:
                z = 0.0
            elif z > m:
                z = float(m)
            f = int(z)
            k[i] = f
            r[i] = z - f
            total += f
        deficit = m - total
        if deficit > 0:
            for i in sorted(range(s), key=lambda j: (-r[j], -j))[:deficit]:
                k[i] += 1
        elif deficit < 0:
            extra = -deficit
            for i in range(s):
                while extra > 0 and k[i] > 0:
                    k[i] -= 1
                    extra -= 1
                if extra == 0:
                    break
        code = 0
        base = m + 1
        for i in range(s):
            code = code * base + k[i]
        if self._lut is not None:
            return int(self._lut[code])
        return int(np.searchsorted(self._codes, code))


def grid_for(model: Model) -> BeliefGrid:
    return BeliefGrid(model.n_s, model.cfg.belief_denominator)


def predictive_probability(beta: np.ndarray, table: np.ndarray, y: int, ei: int) -> float:
    """Probability of observing purchase y given the renewable index, under the belief."""
    return float(beta @ table[:, ei, y])


def belief_update(belief, rule, y: int, e: int, model: Model) -> Belief:
    """Posterior over the next joint state after observing (y, e).

    The battery moves deterministically given (state, y, e); the next demand
    is a fresh independent draw, so the updated belief factorizes into a
    battery posterior times the demand distribution.
    """
    beta = belief.probs if isinstance(belief, Belief) else np.asarray(belief, dtype=float)
    table = rule.table if isinstance(rule, ActionRule) else np.asarray(rule, dtype=float)
    ei = model.e_index(e)
    w = beta * table[:, ei, y]
    denom = float(w.sum())
    if denom <= 0.0:
        raise ZeroProbabilityObservation(f"observation (y={y}, e={e}) has zero predictive probability")
    batt = np.zeros(model.n_b)
    nxt = model.next_b[:, ei, y]
    for s in range(model.n_s):
        if w[s] > 0.0:
            batt[nxt[s]] += w[s]
    batt /= denom
    out = (batt[:, None] * model.p_x[None, :]).reshape(model.n_s)
    return Belief(out)


def _xlog2x(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    mask = a > 0.0
    out[mask] = a[mask] * np.log2(a[mask])
    return out


def per_step_leakage(belief, rule, model: Model) -> float:
    """Expected information revealed by one purchase, in bits.

    This is the mutual information between the hidden joint state and the
    purchase given the renewable arrival, under the current belief and rule.
    The renewable-arrival probability weights each branch but cancels inside
    the log ratio.
    """
    beta = belief.probs if isinstance(belief, Belief) else np.asarray(belief, dtype=float)
    table = rule.table if isinstance(rule, ActionRule) else np.asarray(rule, dtype=float)
    total = 0.0
    for ei in range(model.n_e):
        pe = model.e_probs[ei]
        if pe <= 0.0:
            continue
        sub = table[:, ei, :]  # [n_s, n_y]
        mix = beta @ sub  # marginal purchase probabilities
        num = beta @ _xlog2x(sub)  # sum_s beta(s) a log2 a
        total += pe * float(num.sum() - _xlog2x(mix).sum())
    return max(total, 0.0)


def per_step_cost(belief, rule, model: Model) -> float:
    """Expected purchase size for one slot, in energy units."""
    beta = belief.probs if isinstance(belief, Belief) else np.asarray(belief, dtype=float)
    table = rule.table if isinstance(rule, ActionRule) else np.asarray(rule, dtype=float)
    ys = np.arange(model.n_y, dtype=float)
    per_state = np.einsum("e,sey,y->s", model.e_probs, table, ys)
    return float(beta @ per_state)


def weighted_step_objective(belief, rule, model: Model) -> float:
    """Convex combination of leakage and cost with weight gamma on leakage."""
    g = model.cfg.gamma
    return g * per_step_leakage(belief, rule, model) + (1.0 - g) * per_step_cost(belief, rule, model)
