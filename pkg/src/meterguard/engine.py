"""Vectorized Bellman kernels and rule search over a belief lattice.

Everything here operates on all lattice points at once: beliefs are the rows
of an [N, S] matrix, rules are either one shared [S, E, Y] table or a batch of
per-point tables [N, S, E, Y].  Observation branches (renewable, purchase) are
flattened into one axis so each Bellman backup performs a single batched
quantization.  The rule search is block coordinate descent over the free
(state, renewable) rows with seeded random restarts, or an exhaustive sweep of
the full candidate product for small grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import ActionGrid
from .belief import BeliefGrid
from .errors import ConfigError
from .model import Model

_IMPROVE_EPS = 1e-13  # below this an "improvement" is treated as a tie
_MAX_SWEEPS = 60


def _xlog2x(a: np.ndarray) -> np.ndarray:
    mask = a > 0.0
    out = np.log2(a, out=np.zeros_like(a), where=mask)
    out *= a
    return out


@dataclass
class DpCore:
    """Per-configuration kernel state for one belief lattice."""

    model: Model
    grid: BeliefGrid
    gamma: float
    e_probs: np.ndarray

    def __post_init__(self):
        m = self.model
        self.e_probs = np.asarray(self.e_probs, dtype=float)
        self.active_e = tuple(ei for ei in range(m.n_e) if self.e_probs[ei] > 0.0)
        self.beta = self.grid.points  # [N, S]
        self.n_points = len(self.grid)
        self.y_values = np.arange(m.n_y, dtype=float)
        # Scatter matrices: for each (e, y), map per-state mass to the next
        # battery level (zero where the purchase is infeasible).
        self.scatter = np.zeros((m.n_e, m.n_y, m.n_s, m.n_b))
        for ei in range(m.n_e):
            for y in range(m.n_y):
                for s in range(m.n_s):
                    if m.feasible[s, ei, y]:
                        self.scatter[ei, y, s, m.next_b[s, ei, y]] = 1.0
        self._branch_cache: dict = {}

    def _branches(self, e_list: tuple):
        """Flattened (renewable, purchase) branch constants for a subset of renewables."""
        cached = self._branch_cache.get(e_list)
        if cached is None:
            m = self.model
            n_y = m.n_y
            k = len(e_list) * n_y
            pe_k = np.repeat(self.e_probs[list(e_list)], n_y)
            y_k = np.tile(self.y_values, len(e_list))
            scat_k = self.scatter[list(e_list)].reshape(k, m.n_s, m.n_b)
            cached = (k, pe_k, y_k, scat_k)
            self._branch_cache[e_list] = cached
        return cached

    def _fused(self, tables: np.ndarray, values, e_list: tuple, split: bool = False):
        """Weighted step objective plus continuation for the given renewables.

        ``tables`` is [N, S, E, Y] (per-point) or [S, E, Y] (shared).  With
        ``values`` None only the step objective is computed.  With ``split``
        the (weighted, leakage, cost) step components are returned alongside.
        """
        m = self.model
        beta = self.beta
        n = self.n_points
        k, pe_k, y_k, scat_k = self._branches(e_list)
        if tables.ndim == 3:
            sub = tables[:, list(e_list), :].reshape(m.n_s, k)
            w = beta[:, :, None] * sub[None, :, :]
            num = beta @ _xlog2x(sub)
        else:
            sub = tables[:, :, list(e_list), :].reshape(n, m.n_s, k)
            w = beta[:, :, None] * sub
            num = np.einsum("ns,nsk->nk", beta, _xlog2x(sub))
        pred = w.sum(axis=1)  # [N, K] marginal observation probabilities
        leak = ((num - _xlog2x(pred)) @ pe_k)
        np.maximum(leak, 0.0, out=leak)
        cost = (pred * y_k[None, :]) @ pe_k
        total = self.gamma * leak + (1.0 - self.gamma) * cost
        if values is not None:
            batt = np.einsum("nsk,ksb->nkb", w, scat_k)
            nxt = (batt[:, :, :, None] * m.p_x[None, None, None, :]).reshape(n, k, m.n_s)
            denom = pred[:, :, None]
            np.divide(nxt, denom, out=nxt, where=denom > 0.0)
            ids = self.grid.quantize_batch(nxt.reshape(n * k, m.n_s))
            cont = values[ids].reshape(n, k)
            total = total + ((pred * cont) @ pe_k)
        if split:
            return total, leak, cost
        return total

    # -- step objective ----------------------------------------------------

    def step_values_shared(self, table: np.ndarray):
        """(weighted, leakage, cost) per lattice point for one shared rule table."""
        return self._fused(table, None, self.active_e, split=True)

    def step_values_batch(self, tables: np.ndarray):
        """(weighted, leakage, cost) per lattice point for per-point rule tables."""
        return self._fused(tables, None, self.active_e, split=True)

    # -- Bellman backup ----------------------------------------------------

    def bellman_shared(self, table: np.ndarray, values: np.ndarray) -> np.ndarray:
        return self._fused(table, values, self.active_e)

    def bellman_batch(self, tables: np.ndarray, values: np.ndarray) -> np.ndarray:
        return self._fused(tables, values, self.active_e)

    # -- rule search ---------------------------------------------------------

    def _affected_points(self, s: int) -> np.ndarray:
        """Lattice points that place mass on state s (the only ones a row for s can move)."""
        if not hasattr(self, "_affected"):
            self._affected = {}
        out = self._affected.get(s)
        if out is None:
            out = np.flatnonzero(self.beta[:, s] > 0.0)
            self._affected[s] = out
        return out

    def _row_branch_values(self, tables, values, s, ei, cands, aff):
        """Bellman contribution of renewable branch ei, per candidate row for
        state s, on the affected lattice subset.  Returns [n_cands, n_aff]."""
        m = self.model
        pe = self.e_probs[ei]
        beta = self.beta[aff]
        beta_s = beta[:, s]
        sub = tables[aff][:, :, ei, :]  # [A, S, Y] current branch tables
        w = beta[:, :, None] * sub
        w[:, s, :] = 0.0
        pred0 = w.sum(axis=1)  # [A, Y]
        num0 = np.einsum("as,asy->ay", beta, _xlog2x(sub)) - beta_s[:, None] * _xlog2x(sub[:, s, :])
        batt0 = np.einsum("asy,ysb->ayb", w, self.scatter[ei])
        c = len(cands)
        cl = _xlog2x(cands)
        pred = pred0[None, :, :] + beta_s[None, :, None] * cands[:, None, :]
        num = num0[None, :, :] + beta_s[None, :, None] * cl[:, None, :]
        batt = np.broadcast_to(batt0, (c,) + batt0.shape).copy()
        for y in range(m.n_y):
            if m.feasible[s, ei, y]:
                batt[:, :, y, m.next_b[s, ei, y]] += cands[:, y, None] * beta_s[None, :]
        leak = np.maximum((num - _xlog2x(pred)).sum(axis=2), 0.0)
        cost = pred @ self.y_values
        nxt = (batt[:, :, :, :, None] * m.p_x).reshape(c, len(aff), m.n_y, m.n_s)
        denom = pred[:, :, :, None]
        np.divide(nxt, denom, out=nxt, where=denom > 0.0)
        ids = self.grid.quantize_batch(nxt.reshape(-1, m.n_s))
        cont = (pred * values[ids].reshape(c, len(aff), m.n_y)).sum(axis=2)
        return pe * (self.gamma * leak + (1.0 - self.gamma) * cost + cont)

    def _descend(self, action_grid: ActionGrid, values: np.ndarray, tables: np.ndarray):
        """Block coordinate descent from the given per-point tables, in place.

        Each free row in turn is set to its per-point best candidate; ties keep
        the incumbent row (restart diversity) and otherwise the earliest
        candidate in enumeration order.  Returns the per-point Bellman values
        at the local optimum.
        """
        free = [(s, ei) for (s, ei) in action_grid.free_rows if ei in self.active_e]
        contrib = {ei: self._fused(tables, values, (ei,)) for ei in self.active_e}
        best = sum(contrib.values())
        for _ in range(_MAX_SWEEPS):
            changed = False
            for s, ei in free:
                cands = action_grid.candidates[(s, ei)]
                aff = self._affected_points(s)
                branch = self._row_branch_values(tables, values, s, ei, cands, aff)
                vals = (best - contrib[ei])[aff][None, :] + branch
                sel = np.argmin(vals, axis=0)
                pick = np.arange(len(aff))
                new_best = vals[sel, pick]
                switch = new_best < best[aff] - _IMPROVE_EPS
                if np.any(switch):
                    changed = True
                    moved = aff[switch]
                    tables[moved, s, ei, :] = cands[sel[switch]]
                    best[moved] = new_best[switch]
                    contrib[ei][moved] = branch[sel[switch], pick[switch]]
            if not changed:
                break
        return best

    def minimize(
        self,
        action_grid: ActionGrid,
        values: np.ndarray,
        rng: np.random.Generator | None = None,
        warm: np.ndarray | None = None,
        restarts: int | None = None,
    ):
        """Per-point minimization of the Bellman backup over grid rules.

        Returns (values [N], tables [N, S, E, Y]).  With the coordinate
        strategy the search starts from the warm tables (or the canonical
        first-candidate table) plus seeded random restarts; with the
        exhaustive strategy every candidate combination is scanned and the
        first optimum in enumeration order wins.
        """
        if action_grid.strategy == "exhaustive":
            return self._minimize_exhaustive(action_grid, values)
        if restarts is None:
            restarts = action_grid.restarts
        n = self.n_points
        starts = []
        if warm is not None:
            starts.append(np.array(warm))
        else:
            base = action_grid.base_table()
            starts.append(np.broadcast_to(base, (n,) + base.shape).copy())
        if restarts and rng is None:
            raise ConfigError("random restarts require an rng")
        for _ in range(restarts):
            t = action_grid.random_table(rng)
            starts.append(np.broadcast_to(t, (n,) + t.shape).copy())
        best_val = None
        best_tab = None
        for tables in starts:
            val = self._descend(action_grid, values, tables)
            if best_val is None:
                best_val, best_tab = val, tables
            else:
                better = val < best_val - _IMPROVE_EPS
                if np.any(better):
                    best_val = np.where(better, val, best_val)
                    best_tab[better] = tables[better]
        return best_val, best_tab

    def _minimize_exhaustive(self, action_grid: ActionGrid, values: np.ndarray):
        free = [(s, ei) for (s, ei) in action_grid.free_rows if ei in self.active_e]
        sizes = [len(action_grid.candidates[row]) for row in free]
        combos = int(np.prod(sizes)) if sizes else 1
        if combos * self.n_points > 2e9:
            raise ConfigError(
                f"exhaustive search over {combos} rule combinations is too large; "
                "use the coordinate strategy or a coarser action grid"
            )
        table = action_grid.base_table()
        best_val = None
        best_idx = np.zeros((self.n_points, max(len(free), 1)), dtype=np.int64)
        counters = [0] * len(free)
        done = False
        while not done:
            for row, ci in zip(free, counters):
                table[row[0], row[1], :] = action_grid.candidates[row][ci]
            val = self.bellman_shared(table, values)
            if best_val is None:
                best_val = val.copy()
                if free:
                    best_idx[:] = np.array(counters, dtype=np.int64)[None, :]
            else:
                better = val < best_val - _IMPROVE_EPS
                if np.any(better):
                    best_val[better] = val[better]
                    best_idx[better] = np.array(counters, dtype=np.int64)
            # Advance the last free scalar fastest: enumeration order is
            # lexicographic over the free rows in scan order.
            done = True
            for j in range(len(free) - 1, -1, -1):
                counters[j] += 1
                if counters[j] < sizes[j]:
                    done = False
                    break
                counters[j] = 0
            if not free:
                done = True
        tables = np.broadcast_to(
            action_grid.base_table(), (self.n_points, self.model.n_s, self.model.n_e, self.model.n_y)
        ).copy()
        for j, row in enumerate(free):
            cands = action_grid.candidates[row]
            tables[:, row[0], row[1], :] = cands[best_idx[:, j]]
        return best_val, tables


def core_for(model: Model, grid: BeliefGrid, gamma: float | None = None, e_probs=None) -> DpCore:
    return DpCore(
        model,
        grid,
        model.cfg.gamma if gamma is None else gamma,
        model.e_probs if e_probs is None else e_probs,
    )
