import math

import numpy as np
import pytest

from conftest import random_belief, random_rule_table
from meterguard.belief import (
    ActionRule,
    Belief,
    BeliefGrid,
    belief_update,
    grid_for,
    per_step_cost,
    per_step_leakage,
    weighted_step_objective,
)
from meterguard.errors import ZeroProbabilityObservation
from meterguard.model import Model, SystemConfig


# -- independent oracles -------------------------------------------------------


def enumerate_joint(beta, table, model):
    """P(s', y, e) by explicit enumeration over (s, e, y)."""
    joint = {}
    for s, (b, x) in enumerate(model.states):
        for ei, e in enumerate(model.e_values):
            for y in range(model.n_y):
                p = beta[s] * model.e_probs[ei] * table[s, ei, y]
                if p <= 0.0:
                    continue
                nb = model.next_b[s, ei, y]
                for x2 in range(model.n_x):
                    key = (model.state_index(nb, x2), y, e)
                    joint[key] = joint.get(key, 0.0) + p * model.p_x[x2]
    return joint


def textbook_conditional_mi(beta, table, model):
    """I(S; Y | E) from the explicit joint over (s, y) per renewable value."""
    total = 0.0
    for ei in range(model.n_e):
        pe = model.e_probs[ei]
        if pe <= 0.0:
            continue
        joint = np.outer(beta, np.ones(model.n_y)) * table[:, ei, :]
        py = joint.sum(axis=0)
        ps = joint.sum(axis=1)
        mi = 0.0
        for s in range(model.n_s):
            for y in range(model.n_y):
                if joint[s, y] > 0.0:
                    mi += joint[s, y] * math.log2(joint[s, y] / (ps[s] * py[y]))
        total += pe * mi
    return total


def brute_force_quantize(grid, beta):
    """Scan every lattice point for the minimal L1 distance; ties lex-smallest."""
    dists = np.abs(grid.points - beta[None, :]).sum(axis=1)
    tied = np.flatnonzero(dists == dists.min())
    vecs = [tuple(grid.lattice[i]) for i in tied]
    return int(tied[vecs.index(min(vecs))])


# -- belief updates ------------------------------------------------------------


def test_belief_update_degenerate(binary_model):
    beta = np.zeros(binary_model.n_s)
    beta[binary_model.state_index(2, 1)] = 1.0
    tab = np.zeros((binary_model.n_s, binary_model.n_e, binary_model.n_y))
    tab[:, :, 0] = 1.0  # never buy (valid on the support actually reached)
    out = belief_update(Belief(beta), ActionRule(tab), 0, 0, binary_model)
    assert out.probs[binary_model.state_index(1, 0)] == pytest.approx(0.5)
    assert out.probs[binary_model.state_index(1, 1)] == pytest.approx(0.5)
    assert out.probs.sum() == pytest.approx(1.0)


def test_belief_update_matches_enumeration(binary_model):
    rng = np.random.default_rng(7)
    for _ in range(40):
        beta = random_belief(rng, binary_model.n_s)
        tab = random_rule_table(rng, binary_model)
        joint = enumerate_joint(beta, tab, binary_model)
        for ei, e in enumerate(binary_model.e_values):
            for y in range(binary_model.n_y):
                denom = sum(p for (s2, yy, ee), p in joint.items() if yy == y and ee == e)
                if denom <= 0.0:
                    continue
                expected = np.zeros(binary_model.n_s)
                for (s2, yy, ee), p in joint.items():
                    if yy == y and ee == e:
                        expected[s2] += p / denom
                got = belief_update(beta, tab, y, e, binary_model).probs
                np.testing.assert_allclose(got, expected, atol=1e-12)
                assert got.min() >= 0.0
                assert got.sum() == pytest.approx(1.0, abs=1e-12)


def test_belief_update_zero_probability(binary_model):
    beta = binary_model.initial_belief()
    tab = np.zeros((binary_model.n_s, binary_model.n_e, binary_model.n_y))
    tab[:, :, 0] = 1.0
    tab[binary_model.state_index(0, 1), 0, :] = (0.0, 1.0)  # keep the forced row legal
    with pytest.raises(ZeroProbabilityObservation):
        belief_update(beta, tab, 1, 0, binary_model)  # y=1 never played from full battery


def test_predictive_consistency(binary_model):
    rng = np.random.default_rng(11)
    for _ in range(20):
        beta = random_belief(rng, binary_model.n_s)
        tab = random_rule_table(rng, binary_model)
        total = 0.0
        for ei in range(binary_model.n_e):
            for y in range(binary_model.n_y):
                total += binary_model.e_probs[ei] * float(beta @ tab[:, ei, y])
        assert total == pytest.approx(1.0, abs=1e-12)


# -- quantization ---------------------------------------------------------------


def test_lattice_counts():
    grid = BeliefGrid(3, 4)
    assert len(grid) == math.comb(4 + 3 - 1, 3 - 1)
    assert np.all(grid.lattice.sum(axis=1) == 4)


def test_quantize_lattice_fixed_points(binary_cfg):
    grid = grid_for(Model(binary_cfg))
    ids = grid.quantize_batch(grid.points)
    np.testing.assert_array_equal(ids, np.arange(len(grid)))


def test_quantize_simple_cases():
    grid = BeliefGrid(2, 2)
    assert np.array_equal(grid.lattice[grid.quantize(np.array([0.6, 0.4]))], [1, 1])
    # exact tie between (2,0) and (1,1): lexicographically smaller vector wins
    assert np.array_equal(grid.lattice[grid.quantize(np.array([0.75, 0.25]))], [1, 1])


def test_quantize_matches_brute_force(binary_model):
    grid = grid_for(binary_model)
    rng = np.random.default_rng(3)
    for _ in range(300):
        beta = random_belief(rng, binary_model.n_s)
        got = grid.quantize(beta)
        want = brute_force_quantize(grid, beta)
        d_got = np.abs(grid.points[got] - beta).sum()
        d_want = np.abs(grid.points[want] - beta).sum()
        assert d_got == pytest.approx(d_want, abs=1e-12)
        assert got == want


def test_quantize_one_matches_batch(binary_model):
    grid = grid_for(binary_model)
    rng = np.random.default_rng(5)
    betas = rng.dirichlet(np.ones(binary_model.n_s), size=200)
    batch = grid.quantize_batch(betas)
    for i, beta in enumerate(betas):
        assert grid.quantize_one(beta) == batch[i]


def test_quantization_error_bound(binary_model):
    grid = grid_for(binary_model)
    rng = np.random.default_rng(17)
    betas = rng.dirichlet(np.ones(binary_model.n_s), size=10_000)
    snapped = grid.points[grid.quantize_batch(betas)]
    errors = np.abs(snapped - betas).sum(axis=1)
    bound = 2 * (binary_model.n_s - 1) / (2 * grid.denominator)
    assert errors.max() <= bound + 1e-12


# -- step functionals ------------------------------------------------------------


def test_leakage_zero_for_state_independent_rules(binary_model):
    beta = binary_model.initial_belief()
    # buying exactly the demand depends on the state, buying nothing does not;
    # craft a rule identical across states: y=0 everywhere it is feasible is
    # not state-independent on infeasible rows, so use the always-feasible
    # uniform-on-{0,1} where possible... simplest: identical distributions per
    # (y,e) across all states with positive belief mass.
    tab = np.zeros((binary_model.n_s, binary_model.n_e, binary_model.n_y))
    tab[:, :, 0] = 1.0
    tab[binary_model.state_index(0, 1), 0] = (0.0, 1.0)
    beta_support_full = np.zeros(binary_model.n_s)
    beta_support_full[binary_model.state_index(2, 0)] = 0.5
    beta_support_full[binary_model.state_index(2, 1)] = 0.5
    assert per_step_leakage(beta_support_full, tab, binary_model) == pytest.approx(0.0, abs=1e-12)
    assert per_step_leakage(beta, tab, binary_model) == pytest.approx(0.0, abs=1e-12)


def test_leakage_revealing_rule_is_one_bit():
    cfg = SystemConfig(p_e=0.0)
    model = Model(cfg)
    beta = np.zeros(model.n_s)
    beta[model.state_index(2, 0)] = 0.5
    beta[model.state_index(2, 1)] = 0.5
    tab = np.zeros((model.n_s, model.n_e, model.n_y))
    for s, (b, x) in enumerate(model.states):
        tab[s, :, x] = 1.0
    assert per_step_leakage(beta, tab, model) == pytest.approx(1.0, abs=1e-12)


def test_leakage_matches_textbook_mi(binary_model):
    rng = np.random.default_rng(23)
    for _ in range(50):
        beta = random_belief(rng, binary_model.n_s)
        tab = random_rule_table(rng, binary_model)
        got = per_step_leakage(beta, tab, binary_model)
        want = textbook_conditional_mi(beta, tab, binary_model)
        assert got == pytest.approx(want, abs=1e-10)
        assert 0.0 <= got <= math.log2(binary_model.n_s)


def test_leakage_renewable_factor_cancels(binary_model):
    rng = np.random.default_rng(29)
    for _ in range(20):
        beta = random_belief(rng, binary_model.n_s)
        tab = random_rule_table(rng, binary_model)
        got = per_step_leakage(beta, tab, binary_model)
        # keep the renewable probability inside both sides of the log ratio
        explicit = 0.0
        for s in range(binary_model.n_s):
            for ei in range(binary_model.n_e):
                pe = binary_model.e_probs[ei]
                for y in range(binary_model.n_y):
                    p = beta[s] * tab[s, ei, y] * pe
                    if p <= 0.0:
                        continue
                    mix = sum(beta[s2] * tab[s2, ei, y] * pe for s2 in range(binary_model.n_s))
                    explicit += p * math.log2(tab[s, ei, y] * pe / mix)
        assert got == pytest.approx(explicit, abs=1e-12)


def test_leakage_expectation_identity(binary_model):
    # averaging realized log-ratios over the exact joint equals the functional
    rng = np.random.default_rng(31)
    for _ in range(20):
        beta = random_belief(rng, binary_model.n_s)
        tab = random_rule_table(rng, binary_model)
        expect = 0.0
        for s in range(binary_model.n_s):
            for ei in range(binary_model.n_e):
                pe = binary_model.e_probs[ei]
                for y in range(binary_model.n_y):
                    p = beta[s] * pe * tab[s, ei, y]
                    if p <= 0.0:
                        continue
                    mix = float(beta @ tab[:, ei, y])
                    expect += p * math.log2(tab[s, ei, y] / mix)
        assert per_step_leakage(beta, tab, binary_model) == pytest.approx(expect, abs=1e-10)


def test_cost_examples(binary_model):
    beta = np.full(binary_model.n_s, 1.0 / binary_model.n_s)
    never = np.zeros((binary_model.n_s, binary_model.n_e, binary_model.n_y))
    never[:, :, 0] = 1.0
    never[binary_model.state_index(0, 1), 0] = (0.0, 1.0)  # forced purchase row
    # only the forced row buys: belief mass 1/6, no-renewable probability 1/2
    assert per_step_cost(beta, never, binary_model) == pytest.approx((1 / 6) * 0.5)
    always = np.zeros((binary_model.n_s, binary_model.n_e, binary_model.n_y))
    always[:, :, 1] = 1.0
    # ignore feasibility here: the functional itself just averages y
    assert per_step_cost(beta, always, binary_model) == pytest.approx(1.0)


def test_weighted_objective(binary_model):
    rng = np.random.default_rng(37)
    beta = random_belief(rng, binary_model.n_s)
    tab = random_rule_table(rng, binary_model)
    leak = per_step_leakage(beta, tab, binary_model)
    cost = per_step_cost(beta, tab, binary_model)
    got = weighted_step_objective(beta, tab, binary_model)
    assert got == pytest.approx(0.5 * leak + 0.5 * cost, abs=1e-12)
    g1 = Model(SystemConfig(gamma=1.0))
    g0 = Model(SystemConfig(gamma=0.0))
    assert weighted_step_objective(beta, tab, g1) == pytest.approx(per_step_leakage(beta, tab, g1))
    assert weighted_step_objective(beta, tab, g0) == pytest.approx(per_step_cost(beta, tab, g0))


def test_action_rule_validation(binary_model):
    tab = random_rule_table(np.random.default_rng(0), binary_model)
    ActionRule(tab).validate(binary_model)
    bad = tab.copy()
    bad[binary_model.state_index(2, 0), 0] = (0.0, 1.0)  # infeasible overflow purchase
    with pytest.raises(Exception):
        ActionRule(bad).validate(binary_model)
