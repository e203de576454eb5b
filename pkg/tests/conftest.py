import numpy as np
import pytest

from rgmsfem.coefficient import AffineCoefficient, ThetaTerm, analytic_periodic_field
from rgmsfem.grid import build_mesh
from rgmsfem.harness import pipeline
from rgmsfem.harness.config import preset, resolve


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_mesh():
    return build_mesh(20, 20, 4, 4)


@pytest.fixture(scope="session")
def periodic_coeff(small_mesh):
    return AffineCoefficient([ThetaTerm("mu_plus_mu_sq", 0)], [analytic_periodic_field(small_mesh)])


@pytest.fixture(scope="session")
def unit_coeff(small_mesh):
    return AffineCoefficient([ThetaTerm("mu_plus_mu_sq", 0)], [np.ones(small_mesh.cell_shape)])


def small_config(**overrides):
    cfg = {"preset": "paper41", "mesh": {"nx": 20, "ny": 20, "Nx": 4, "Ny": 4},
           "n_s": 12, "l": 3, "gpc_degree": 2}
    cfg.update(overrides)
    return resolve(cfg)


@pytest.fixture(scope="session")
def small_model():
    return pipeline.run_offline(small_config())


@pytest.fixture(scope="session")
def small_q2_model():
    cfg = small_config(
        coefficient=[{"theta_id": "mu_plus_mu_sq", "component": 0, "builtin_field": "periodic"},
                     {"theta_id": "mu_plus_mu_sq", "component": 1, "builtin_field": "contrast",
                      "seed": 3, "tau": 100.0}],
        M=2, mu_star=[[0.6, 0.4]], n_s=20)
    return pipeline.run_offline(cfg)


@pytest.fixture(scope="session")
def paper41_model():
    return pipeline.run_offline(preset("paper41", l=10))


@pytest.fixture(scope="session")
def case1_model():
    return pipeline.run_offline(preset("case1", l=14, predictor="gpc"))
