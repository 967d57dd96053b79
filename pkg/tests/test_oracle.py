import math

import numpy as np
import pytest

from conftest import random_rule_table
from meterguard.actions import reveal_rule, uniform_rule
from meterguard.errors import HorizonTooLarge
from meterguard.model import Model, SystemConfig
from meterguard.oracle import (
    ConstantPolicy,
    additive_leakage_decomposition,
    build_joint,
    exact_cost,
    exact_leakage,
    exact_objective,
)


@pytest.fixture
def no_res_cfg():
    return SystemConfig(p_e=0.0)


def test_joint_normalizes(binary_cfg, binary_model):
    policy = ConstantPolicy(uniform_rule(binary_model).table)
    table = build_joint(policy, 3, binary_cfg)
    assert table.total() == pytest.approx(1.0, abs=1e-10)
    assert min(table.entries.values()) >= 0.0


def test_reveal_policy_leaks_demand_entropy(no_res_cfg):
    model = Model(no_res_cfg)
    policy = ConstantPolicy(reveal_rule(model).table)
    assert exact_leakage(policy, 2, no_res_cfg) == pytest.approx(1.0, abs=1e-10)
    assert exact_cost(policy, 2, no_res_cfg) == pytest.approx(0.5, abs=1e-12)


def test_state_independent_policy_leaks_nothing(binary_cfg, binary_model):
    # Buying nothing is the same distribution at every state the chain can
    # reach from a full battery within two slots, so the readings carry no
    # information about the hidden state.
    tab = np.zeros((binary_model.n_s, binary_model.n_e, binary_model.n_y))
    tab[:, :, 0] = 1.0
    tab[binary_model.state_index(0, 1), 0, :] = (0.0, 1.0)  # forced, not reached
    policy = ConstantPolicy(tab)
    assert exact_leakage(policy, 2, binary_cfg) == pytest.approx(0.0, abs=1e-10)


def test_exact_objective_reveal(no_res_cfg):
    model = Model(no_res_cfg)
    policy = ConstantPolicy(reveal_rule(model).table)
    leak, cost, weighted = exact_objective(policy, 2, no_res_cfg)
    assert weighted == pytest.approx(0.75, abs=1e-10)


def test_zero_purchase_policy_under_constant_recharge():
    cfg = SystemConfig(p_e=1.0)
    model = Model(cfg)
    tab = np.zeros((model.n_s, model.n_e, model.n_y))
    tab[:, :, 0] = 1.0
    tab[model.state_index(0, 1), 0, :] = (0.0, 1.0)  # forced, unreachable at p_e=1
    policy = ConstantPolicy(tab)
    leak, cost, weighted = exact_objective(policy, 2, cfg)
    assert leak == pytest.approx(0.0, abs=1e-12)
    assert cost == pytest.approx(0.0, abs=1e-12)
    assert weighted == pytest.approx(0.0, abs=1e-12)


def test_chain_rule_identity(binary_cfg, binary_model):
    rng = np.random.default_rng(101)
    for horizon in (1, 2, 3):
        for _ in range(6):
            policy = ConstantPolicy(random_rule_table(rng, binary_model))
            block = exact_leakage(policy, horizon, binary_cfg) * horizon
            terms = additive_leakage_decomposition(policy, horizon, binary_cfg)
            assert block == pytest.approx(sum(terms), abs=1e-10)


def test_leakage_bounds(binary_cfg, binary_model):
    rng = np.random.default_rng(55)
    for horizon in (1, 2, 3):
        policy = ConstantPolicy(random_rule_table(rng, binary_model))
        leak = exact_leakage(policy, horizon, binary_cfg)
        cap = math.log2((binary_model.n_x ** horizon) * binary_model.n_b) / horizon
        assert 0.0 - 1e-12 <= leak <= cap + 1e-12


def test_unconditional_variant_with_degenerate_renewable(no_res_cfg):
    model = Model(no_res_cfg)
    rng = np.random.default_rng(77)
    policy = ConstantPolicy(random_rule_table(rng, model))
    cond = exact_leakage(policy, 2, no_res_cfg, conditional_on_e=True)
    uncond = exact_leakage(policy, 2, no_res_cfg, conditional_on_e=False)
    assert cond == pytest.approx(uncond, abs=1e-12)


def test_initial_battery_distribution_matters(no_res_cfg):
    model = Model(no_res_cfg)
    policy = ConstantPolicy(reveal_rule(model).table)
    # revelation says nothing about the battery: leakage equals demand entropy
    # whatever the initial charge distribution
    spread = np.array([0.25, 0.25, 0.5])
    leak = exact_leakage(policy, 2, no_res_cfg, init_b=spread)
    assert leak == pytest.approx(1.0, abs=1e-10)


def test_episodic_decoupling(binary_cfg, binary_model):
    """Conditioned on the recharge pattern, total leakage splits by episode
    for a policy that restarts at recharges and ignores the pre-recharge
    battery there."""
    horizon = 3
    stage_tables = []
    rng = np.random.default_rng(9)
    no_res = Model(SystemConfig(p_e=0.0))
    for _ in range(horizon):
        rows = random_rule_table(rng, no_res)[:, 0, :]
        stage_tables.append(rows)

    full_b = binary_cfg.b_max

    def episode_table(stage):
        """Full-model table for a within-episode stage: quiet rows for no
        renewable, restart rows (full battery, stage 1) when it fires."""
        tab = np.zeros((binary_model.n_s, binary_model.n_e, binary_model.n_y))
        tab[:, 0, :] = stage_tables[stage - 1]
        for b in range(binary_model.n_b):
            for x in range(binary_model.n_x):
                tab[binary_model.state_index(b, x), 1, :] = stage_tables[0][
                    binary_model.state_index(full_b, x)
                ]
        return tab

    class EpisodicPolicy:
        def rule_for(self, t, y_hist, e_hist):
            # A recharge slot is stage 1 of its episode (played through the
            # firing-renewable rows), so the slot after it is stage 2.
            stage = 1
            for e in e_hist:
                stage = 2 if e == full_b else stage + 1
            return episode_table(stage)

    table = build_joint(EpisodicPolicy(), horizon, binary_cfg)
    # group trajectories by renewable pattern and compare the conditional
    # leakage against the sum of per-episode leakages computed independently
    from collections import defaultdict

    by_pattern = defaultdict(dict)
    for key, p in table.entries.items():
        by_pattern[key[2]][key] = p

    no_res_cfg = SystemConfig(p_e=0.0)
    for pattern, entries in by_pattern.items():
        p_pattern = sum(entries.values())
        cond = {key: p / p_pattern for key, p in entries.items()}
        got = _conditional_mi(cond)
        # split [1..horizon] into episodes at recharge instants (e=full at the
        # start of a new episode; slot 1 starts one unconditionally)
        episodes = []
        current = [0]
        for t in range(1, horizon):
            if pattern[t] == full_b:
                episodes.append(current)
                current = [t]
            else:
                current.append(t)
        episodes.append(current)
        class SubPolicy:
            """Within one episode the stage index is the slot index."""

            def rule_for(self, t, y_hist, e_hist):
                return episode_table(t)

        want = sum(
            exact_leakage(SubPolicy(), len(ep), no_res_cfg, conditional_on_e=False) * len(ep)
            for ep in episodes
        )
        assert got == pytest.approx(want, abs=1e-9)


def _conditional_mi(cond_entries):
    """I(X^T, B1; Y^T) for a fixed renewable pattern (already conditioned)."""
    from collections import defaultdict

    joint = defaultdict(float)
    hid = defaultdict(float)
    obs = defaultdict(float)
    for (b1, xs, es, ys), p in cond_entries.items():
        joint[((b1, xs), ys)] += p
        hid[(b1, xs)] += p
        obs[ys] += p
    total = 0.0
    for (h, o), p in joint.items():
        if p > 0.0:
            total += p * math.log2(p / (hid[h] * obs[o]))
    return total


def test_node_budget(binary_cfg):
    cfg = binary_cfg.replace(node_budget=10)
    model = Model(cfg)
    policy = ConstantPolicy(uniform_rule(model).table)
    with pytest.raises(HorizonTooLarge):
        build_joint(policy, 3, cfg)
