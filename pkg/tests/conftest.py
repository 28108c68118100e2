import numpy as np
import pytest

from snodep import ModelConfig, ProcessModel, SolverConfig


def finite_diff(f, x, h=1e-6):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return g


@pytest.fixture
def small_model_factory():
    def make(kind, d_y=2, head="gaussian", family="normal", seed=0):
        cfg = ModelConfig(kind, d_y=d_y, head=head, latent_family=family,
                          d_r=6, d_z=4, d_d=3, hidden=5,
                          solver=SolverConfig("euler", 2))
        return ProcessModel(cfg, seed=seed)

    return make
