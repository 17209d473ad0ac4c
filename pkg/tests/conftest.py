import numpy as np
import pytest

from driftgraph.fvm import Discretization, simulate
from driftgraph.gpdata import SensorGrids, make_training_instance, smooth_initial
from driftgraph.graphs import chain_graph, fig1_graph


@pytest.fixture(scope="session")
def grids():
    return SensorGrids()


@pytest.fixture(scope="session")
def chain3_instance():
    """Smoothed random instance on a 3-edge chain with its reference solve
    (velocities <= 1 so the bound-preserving regime applies)."""
    g, bc = make_training_instance(chain_graph(3), seed=42, rate_amplitude=0.8,
                                   velocity_range=(0.5, 1.0))
    disc = Discretization.create(g, n=32)
    bc = smooth_initial(disc, bc, 0.02, SensorGrids())
    traj = simulate(disc, bc)
    return g, bc, disc, traj


@pytest.fixture(scope="session")
def fig1_instance():
    g, bc = make_training_instance(fig1_graph(), seed=7, rate_amplitude=0.8,
                                   velocity_range=(0.5, 1.0))
    disc = Discretization.create(g, n=32)
    bc = smooth_initial(disc, bc, 0.02, SensorGrids())
    traj = simulate(disc, bc)
    return g, bc, disc, traj


def rel_l2(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
