import numpy as np
import pytest

from meterguard.model import Model, SystemConfig


@pytest.fixture
def binary_cfg():
    """The default binary instance: X=Y={0,1}, B={0,1,2}, E={0,2}, P_X=0.5."""
    return SystemConfig()


@pytest.fixture
def binary_model(binary_cfg):
    return Model(binary_cfg)


def random_belief(rng, n_states):
    return rng.dirichlet(np.ones(n_states))


def random_rule_table(rng, model):
    """Uniformly random feasible rule rows."""
    tab = np.zeros((model.n_s, model.n_e, model.n_y))
    for s in range(model.n_s):
        for ei in range(model.n_e):
            ys = model.feasible_set(s, ei)
            tab[s, ei, ys] = rng.dirichlet(np.ones(len(ys)))
    return tab
