import numpy as np
import pytest

from restenofem import SimulationConfig, TimeSteppingConfig, build_scenario
from restenofem.kinetics import SpeciesParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def unit_hex():
    nodes = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
         [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float)
    return nodes, np.arange(8)


def make_block_config(**kw) -> SimulationConfig:
    """Small block scenario config with overridable time stepping."""
    cfg = SimulationConfig()
    ts = kw.pop("timestep", None)
    for key, val in kw.items():
        setattr(cfg, key, val)
    cfg.timestep = ts or TimeSteppingConfig(dt=1.0, t_end=10.0)
    return cfg


def random_element_fields(rng, n_nodes=8, kp=None, u_scale=0.05):
    """Physically plausible random nodal fields around the healthy state."""
    kp = kp or SpeciesParams()
    f = {
        "P": kp.c_P_th * rng.uniform(0.2, 3.0, n_nodes),
        "T": kp.c_T_th * rng.uniform(0.2, 3.0, n_nodes),
        "E": kp.c_E_eq * rng.uniform(0.3, 1.1, n_nodes),
        "S": kp.rho_S_eq * rng.uniform(0.8, 1.8, n_nodes),
        "u": u_scale * rng.standard_normal((n_nodes, 3)),
    }
    f_old = {
        "P": f["P"] * rng.uniform(0.8, 1.2, n_nodes),
        "T": f["T"] * rng.uniform(0.8, 1.2, n_nodes),
        "E": f["E"] * rng.uniform(0.9, 1.1, n_nodes),
        "S": f["S"] * rng.uniform(0.9, 1.1, n_nodes),
        "u": f["u"] + 0.01 * rng.standard_normal((n_nodes, 3)),
    }
    return f, f_old


@pytest.fixture
def block_scenario():
    cfg = make_block_config()
    return build_scenario(cfg)
