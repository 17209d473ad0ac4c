import numpy as np
import pytest

from driftgraph.fvm import (
    Discretization,
    GraphField,
    GraphSystem,
    assemble_implicit_operator,
    lax_friedrichs_flux,
    nonlinearity,
    project_initial,
    simulate,
    space_time_error,
    total_mass,
)
from driftgraph.graphs import BoundaryData, build_graph, chain_graph, fig1_graph
from driftgraph.gpdata import make_training_instance, smooth_initial, SensorGrids

from conftest import rel_l2


def single_edge_graph():
    return build_graph({"vertices": ["a", "b", "c"], "edges": [("a", "b"), ("b", "c")]})


def test_nonlinearity_values():
    assert nonlinearity(0.0) == 0.0
    assert nonlinearity(1.0) == 0.0
    assert nonlinearity(0.5) == 0.25


def test_lax_friedrichs_values():
    assert lax_friedrichs_flux(0.0, 0.0, 1.0, 1.0) == 0.0
    assert lax_friedrichs_flux(0.5, 0.5, 2.0, 1.0) == pytest.approx(0.5)
    assert lax_friedrichs_flux(0.2, 0.8, 1.0, 1.0) == pytest.approx(-0.14)


def test_flux_consistency():
    rng = np.random.default_rng(0)
    for rho in rng.uniform(0, 1, 20):
        for nu in (0.3, 1.0, 1.4):
            assert lax_friedrichs_flux(rho, rho, nu, 1.0) == pytest.approx(
                nu * nonlinearity(rho))


def test_operator_dimension_and_m_matrix():
    g = fig1_graph()
    d = Discretization.create(g, n=8)
    op = assemble_implicit_operator(d).toarray()
    expected_dim = 5 * (8 - 1) + 6
    assert op.shape == (expected_dim, expected_dim)
    assert d.n_unknowns == expected_dim
    diag = np.diag(op)
    off = op - np.diag(diag)
    assert np.all(diag > 0)
    assert np.all(off <= 1e-15)
    # strict diagonal dominance and nonnegative row sums
    assert np.all(diag - np.abs(off).sum(axis=1) > 0)
    assert np.all(op.sum(axis=1) >= -1e-15)


def test_operator_m_matrix_chain():
    g = chain_graph(7)
    d = Discretization.create(g, n=6, eps=0.13)
    op = assemble_implicit_operator(d).toarray()
    off = op - np.diag(np.diag(op))
    assert np.all(off <= 1e-15)
    assert np.all(np.diag(op) - np.abs(off).sum(axis=1) > 0)


def test_zero_diffusion_gives_mass_matrix():
    g = single_edge_graph()
    d = Discretization(graph=g, resolution={0: 2, 1: 2}, tau=0.1, n_t=10, eps=1e-300)
    op = assemble_implicit_operator(d).toarray()
    assert np.allclose(op, np.diag(np.diag(op)), atol=1e-290)
    assert np.allclose(np.diag(op), d.cell_measures(), atol=1e-290)


def test_projection_constant_and_linear():
    g = single_edge_graph()
    d = Discretization.create(g, n=4, horizon=0.1)
    bc = BoundaryData.zero(g)
    for i in range(g.n_edges):
        bc.init[i] = np.full(101, 0.37)
    f = project_initial(d, bc.init)
    assert np.allclose(f.values, 0.37)

    xs = np.linspace(0, 1, 101)
    init = {0: xs.copy(), 1: xs.copy()}
    f = project_initial(d, init)
    # cell averages of a linear profile equal its value at cell centers
    centers = d.cell_centers(0)
    assert np.allclose(f.edge_values(0)[1:-1], centers[1:-1], atol=1e-12)

    d2 = Discretization.create(g, n=2, horizon=0.1)
    f2 = project_initial(d2, init)
    # middle cell of a 3-cell edge spans (1/3, 2/3): the average of x is 1/2
    assert f2.edge_values(0)[1] == pytest.approx(0.5, abs=1e-12)


def test_projection_vertex_patch_two_edge_chain():
    g = single_edge_graph()
    d = Discretization.create(g, n=4, horizon=0.1)
    xs = np.linspace(0, 1, 201)
    init = {0: xs.copy(), 1: 1.0 - xs}
    f = project_initial(d, init)
    h = d.h[0]
    # patch at the shared vertex b: averages of x over [1-h, 1] and of 1-x
    # over [0, h], both equal 1 - h/2
    assert f.vertex_value("b") == pytest.approx(1.0 - h / 2.0, abs=1e-12)


def test_projection_short_profile_rejected():
    g = single_edge_graph()
    d = Discretization.create(g, n=4)
    with pytest.raises(ValueError, match=">= 2"):
        project_initial(d, {0: np.array([1.0]), 1: np.array([1.0, 1.0])})


def test_total_mass_values():
    g = fig1_graph()
    d = Discretization.create(g, n=8)
    zero = GraphField(d, np.zeros(d.n_unknowns))
    one = GraphField(d, np.ones(d.n_unknowns))
    assert total_mass(zero) == 0.0
    assert total_mass(one) == pytest.approx(g.total_length())


def test_stationary_states():
    g = fig1_graph()
    d = Discretization.create(g, n=8)
    bc = BoundaryData.zero(g)
    sys = GraphSystem(d)
    for c in (0.0, 1.0):
        state = GraphField(d, np.full(d.n_unknowns, c))
        for _ in range(5):
            state = sys.step(state, bc)
        assert np.allclose(state.values, c, atol=1e-13)


def test_mass_conservation_zero_rates():
    for g0 in (fig1_graph(), chain_graph(7)):
        d = Discretization.create(g0, n=16)
        bc = BoundaryData.zero(g0)
        rng = np.random.default_rng(1)
        init = GraphField(d, rng.uniform(0, 1, d.n_unknowns))
        traj = simulate(d, bc, init_field=init)
        mass = traj.mass_series()
        assert np.abs(mass - mass[0]).max() <= 1e-12 * max(1.0, mass[0])


def test_bound_preservation_random_instance():
    g, bc = make_training_instance(fig1_graph(), seed=9, rate_amplitude=0.8,
                                   rate_cap=1.0, velocity_range=(0.5, 1.0))
    d = Discretization.create(g, n=24)
    traj = simulate(d, bc)
    assert traj.states.min() >= -1e-10
    assert traj.states.max() <= 1.0 + 1e-10


def test_nan_detection():
    g = chain_graph(3)
    d = Discretization.create(g, n=8)
    bc = BoundaryData.zero(g)
    state = GraphField(d, np.full(d.n_unknowns, np.nan))
    sys = GraphSystem(d)
    from driftgraph.fvm import SolverError
    with pytest.raises(SolverError, match="non-finite"):
        sys.step(state, bc)


def test_vertex_flux_kirchhoff_identity(chain3_instance):
    g, bc, d, traj = chain3_instance
    for v in g.interior_vertices:
        total = np.zeros(d.n_t)
        for i in g.in_edges[v]:
            total += traj.vertex_flux(i, "t")
        for i in g.out_edges[v]:
            total -= traj.vertex_flux(i, "o")
        assert np.abs(total).max() < 1e-12


def test_exterior_flux_matches_robin_rate(chain3_instance):
    g, bc, d, traj = chain3_instance
    i0 = g.edges_of_type("inflow")[0]
    vo = g.edges[i0].origin
    tm = traj.times[:-1]
    jo = traj.vertex_flux(i0, "o")
    rho_v = traj.edge_states(i0)[:-1, 0]
    expected = bc.rate_at("inflow", vo, tm) * (1.0 - rho_v)
    assert np.abs(jo - expected).max() < 1e-12


def test_self_convergence_first_order():
    g, bc = make_training_instance(fig1_graph(), seed=4, rate_amplitude=0.8,
                                   velocity_range=(0.5, 1.0))
    grids = SensorGrids()
    levels = [Discretization.create(g, n=8)]
    for _ in range(2):
        levels.append(levels[-1].refine())
    bcs = smooth_initial(levels[-1], bc, 0.02, grids)
    trajs = [simulate(d, bcs) for d in levels]
    e1 = space_time_error(trajs[0], trajs[1])[0]
    e2 = space_time_error(trajs[1], trajs[2])[0]
    order = np.log2(e1 / e2)
    assert 0.7 <= order <= 1.3


def test_trajectory_value_and_cellwise(chain3_instance):
    g, bc, d, traj = chain3_instance
    # endpoints of the bilinear interpolant equal the vertex values
    v = traj.value(0, 0.5, 0.0)
    k = int(round(0.5 / d.tau))
    assert np.isfinite(v)
    cw = traj.cellwise(0, traj.times[k], 1e-9)
    assert cw == pytest.approx(traj.edge_states(0)[k, 0])


def test_simulate_zero_everything():
    g = chain_graph(4)
    d = Discretization.create(g, n=8)
    bc = BoundaryData.zero(g)
    traj = simulate(d, bc)
    assert np.all(traj.states == 0.0)
