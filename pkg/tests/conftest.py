"""Shared fixtures: models, grids, and a couple of expensive solves."""

import numpy as np
import pytest

from torusmfg.grid import GridField, TorusGrid
from torusmfg.model import Coupling, MFGModel, Potential, Regularization
from torusmfg.solver import continuation_solve


@pytest.fixture(scope="session")
def smooth_model():
    """Smooth regime: V = 0.3 sin(2 pi x), g(m) = m; osc V < g(1)."""
    return MFGModel(coupling=Coupling(kappa=1.0, alpha=1.0),
                    potential=Potential(kind="sine", c=0.3))


@pytest.fixture(scope="session")
def reg0():
    return Regularization(sigma=0.0, delta=0.0)


@pytest.fixture(scope="session")
def smooth_sol_256(smooth_model, reg0):
    return continuation_solve(0.1, smooth_model, reg0, TorusGrid(256), tol_abs=1e-10)


@pytest.fixture(scope="session")
def smooth_sol_512(smooth_model, reg0):
    return continuation_solve(0.1, smooth_model, reg0, TorusGrid(512), tol_abs=1e-10)


def smooth_random_field(grid: TorusGrid, seed: int, modes: int = 4,
                        amp: float = 1.0) -> GridField:
    """Band-limited random trig field; gradients stay O(1) on refinement."""
    rng = np.random.default_rng(seed)
    x = grid.coordinates()
    vals = np.zeros(grid.n)
    for k in range(1, modes + 1):
        vals += rng.normal(0.0, amp / k) * np.sin(2 * np.pi * k * x)
        vals += rng.normal(0.0, amp / k) * np.cos(2 * np.pi * k * x)
    return GridField(grid, vals)
