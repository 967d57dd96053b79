import numpy as np
import pytest

from meterguard.actions import min_purchase_rule, reveal_rule
from meterguard.model import Model, SystemConfig
from meterguard.policies import BatteryConditionedPolicy, BCPSlotPolicy
from meterguard.sim import simulate, simulate_episodic
from meterguard.solver_infinite import ConstantSlotPolicy


def test_reveal_policy_rates():
    cfg = SystemConfig(p_e=0.0)
    model = Model(cfg)
    policy = ConstantSlotPolicy(reveal_rule(model).table)
    res = simulate(policy, cfg, total_slots=100_000)
    assert res.leakage_rate == pytest.approx(1.0, abs=0.01)
    assert res.cost_rate == pytest.approx(0.5, abs=0.01)
    assert res.weighted == pytest.approx(0.5 * res.leakage_rate + 0.5 * res.cost_rate, abs=1e-12)


def test_state_independent_policy_zero_leakage_every_slot():
    cfg = SystemConfig(p_e=0.3)
    model = Model(cfg)
    # buy nothing wherever feasible; the forced purchase row is the only
    # state-dependent entry and it is reachable, so restrict to a policy that
    # is truly constant across states: always reveal, then uniform mixing of
    # feasible? keep it simple: certain recharge makes zero-purchase constant
    cfg_on = SystemConfig(p_e=1.0)
    model_on = Model(cfg_on)
    policy = ConstantSlotPolicy(min_purchase_rule(model_on).table)
    res, log = simulate(policy, cfg_on, total_slots=5_000, keep_log=True)
    assert np.all(log.step_leakage_bits == 0.0)
    assert res.leakage_rate == 0.0
    assert res.cost_rate == 0.0


def test_simulation_is_reproducible():
    cfg = SystemConfig(p_e=0.4)
    model = Model(cfg)
    policy = ConstantSlotPolicy(reveal_rule(model).table)
    _, log1 = simulate(policy, cfg, total_slots=2_000, keep_log=True)
    _, log2 = simulate(policy, cfg, total_slots=2_000, keep_log=True)
    for field in ("x", "e", "y", "b", "step_leakage_bits", "step_cost"):
        np.testing.assert_array_equal(getattr(log1, field), getattr(log2, field))


def test_battery_and_demand_constraints_hold():
    cfg = SystemConfig(p_e=0.35)
    model = Model(cfg)
    policy = ConstantSlotPolicy(reveal_rule(model).table)
    _, log = simulate(policy, cfg, total_slots=20_000, keep_log=True)
    assert log.b.min() >= 0 and log.b.max() <= cfg.b_max
    # demand always met: effective battery + purchase covers it
    eff = np.minimum(log.e + log.b, cfg.b_max)
    assert np.all(eff + log.y - log.x >= 0)


def test_cost_conservation_without_renewable():
    cfg = SystemConfig(p_e=0.0)
    model = Model(cfg)
    policy = ConstantSlotPolicy(reveal_rule(model).table)
    res = simulate(policy, cfg, total_slots=200_000)
    assert abs(res.cost_rate - 0.5) <= max(3 * res.stderr_cost, 1e-3)


def test_episodic_episode_lengths():
    cfg = SystemConfig(p_e=0.5)
    bcp = BatteryConditionedPolicy(np.zeros(3), np.ones(3))
    res = simulate_episodic(BCPSlotPolicy(bcp, cfg), cfg, episodes=20_000)
    assert res.extras["mean_episode_length"] == pytest.approx(2.0, abs=0.02)


def test_episodic_matches_stationary_for_shared_pair_bcp():
    cfg = SystemConfig(p_e=0.6)
    bcp = BatteryConditionedPolicy(np.full(3, 0.3), np.full(3, 0.8))
    policy = BCPSlotPolicy(bcp, cfg)
    res_ep = simulate_episodic(policy, cfg, episodes=30_000)
    res_st = simulate(policy, cfg, total_slots=60_000)
    tol = 4 * max(res_ep.stderr_leakage + res_st.stderr_leakage, 1e-4)
    assert abs(res_ep.leakage_rate - res_st.leakage_rate) <= tol
    tol_c = 4 * max(res_ep.stderr_cost + res_st.stderr_cost, 1e-4)
    assert abs(res_ep.cost_rate - res_st.cost_rate) <= tol_c


def test_certain_recharge_all_zero():
    cfg = SystemConfig(p_e=1.0)
    model = Model(cfg)
    policy = ConstantSlotPolicy(min_purchase_rule(model).table)
    res = simulate(policy, cfg, total_slots=3_000)
    assert res.leakage_rate == 0.0 and res.cost_rate == 0.0 and res.weighted == 0.0
