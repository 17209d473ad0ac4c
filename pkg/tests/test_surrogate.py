import numpy as np
import pytest

from driftgraph.formats import FormatError
from driftgraph.fvm import Discretization, simulate
from driftgraph.gpdata import SensorGrids, extract_sensors, make_training_instance, smooth_initial
from driftgraph.graphs import chain_graph
from driftgraph.surrogate import (
    DeepOnetModel,
    DeepOnetSurrogate,
    Direction,
    OracleSurrogate,
    SensorInput,
    SurrogateSet,
    edge_loss,
    evaluate,
    flux,
    load_model,
    save_model,
)

from conftest import rel_l2

N_SENSOR = 3 * 21 + 1


def small_model(seed=0, edge_type="inner", width=12, p=None):
    return DeepOnetModel.random(seed, n_sensor=N_SENSOR, width=width, depth=3,
                                p=p, eps=0.05, edge_type=edge_type)


def small_sensor(seed=1, edge_type="inner"):
    rng = np.random.default_rng(seed)
    return SensorInput(
        u_origin=rng.uniform(0, 0.4, 21),
        u_target=rng.uniform(0, 0.4, 21),
        u_init=rng.uniform(0.1, 0.9, 21),
        nu=0.9,
        edge_type=edge_type,
    )


def test_branch_forced_to_unit_vector_reads_trunk_basis():
    model = small_model()
    model.weights["branch.out.W"][:] = 0.0
    b = np.zeros(model.p, dtype=np.float32)
    b[0] = 1.0
    model.weights["branch.out.b"] = b
    model.__post_init__()
    s = small_sensor()
    backend = DeepOnetSurrogate(model)
    sol = backend.solve(s)
    ts = np.array([0.2, 0.7])
    xs = np.array([0.1, 0.8])
    (t0,) = model.trunk(ts, xs, order=0)
    assert np.allclose(sol.rho(ts, xs), t0[:, 0])


def test_dot_product_bilinearity():
    model = small_model(3)
    s = small_sensor(2)
    sol = DeepOnetSurrogate(model).solve(s)
    base = sol.rho(0.4, 0.6)
    # doubling is exact in float32, so the scaling law holds to full precision
    model.weights["branch.out.W"] = 2.0 * model.weights["branch.out.W"]
    model.weights["branch.out.b"] = 2.0 * model.weights["branch.out.b"]
    model.__post_init__()
    sol2 = DeepOnetSurrogate(model).solve(s)
    assert sol2.rho(0.4, 0.6) == pytest.approx(2.0 * base, rel=1e-12)


def test_trunk_derivatives_match_finite_differences():
    model = small_model(4)
    s = small_sensor(5)
    sol = DeepOnetSurrogate(model).solve(s)
    rng = np.random.default_rng(0)
    h = 1e-4
    worst = {"dx": 0.0, "dt": 0.0, "dxx": 0.0}
    for _ in range(10):
        t, x = rng.uniform(0.1, 0.9, 2)
        fd_x = (sol.rho(t, x + h) - sol.rho(t, x - h)) / (2 * h)
        fd_t = (sol.rho(t + h, x) - sol.rho(t - h, x)) / (2 * h)
        fd_xx = (sol.rho(t, x + h) - 2 * sol.rho(t, x) + sol.rho(t, x - h)) / h**2
        worst["dx"] = max(worst["dx"], abs(fd_x - sol.rho_dx(t, x)) / max(abs(fd_x), 1e-10))
        worst["dt"] = max(worst["dt"], abs(fd_t - sol.rho_dt(t, x)) / max(abs(fd_t), 1e-10))
        worst["dxx"] = max(worst["dxx"], abs(fd_xx - sol.rho_dxx(t, x)) / max(abs(fd_xx), 1e-8))
    assert worst["dx"] < 1e-5 and worst["dt"] < 1e-5 and worst["dxx"] < 1e-4


def test_branch_input_tangents_match_finite_differences():
    model = small_model(6)
    s = small_sensor(7)
    u = s.to_vector()
    rng = np.random.default_rng(1)
    du = rng.standard_normal((3, len(u)))
    b, db = model.branch(u, du)
    h = 1e-6
    for q in range(3):
        bp, _ = model.branch(u + h * du[q], None)
        bm, _ = model.branch(u - h * du[q], None)
        fd = (bp - bm) / (2 * h)
        assert rel_l2(db[q], fd) < 1e-7


def test_flux_with_x_independent_trunk():
    model = small_model(8)
    model.weights["trunk.frequencies"][:, 1] = 0.0  # no x dependence
    model.__post_init__()
    s = small_sensor(9)
    backend = DeepOnetSurrogate(model)
    sol = backend.solve(s)
    t, x = 0.3, 0.6
    rho = sol.rho(t, x)
    assert sol.flux(t, x) == pytest.approx(s.nu * rho * (1 - rho), rel=1e-12)


def test_deeponet_d_flux_matches_fd():
    model = small_model(10)
    s = small_sensor(11)
    dirs = [Direction("origin", np.sin(np.arange(21))),
            Direction("init", np.ones(21)),
            Direction("nu", 1.0)]
    backend = DeepOnetSurrogate(model)
    sol = backend.solve(s, dirs)
    times = np.linspace(0, 1, 7)
    h = 1e-6
    for q, d in enumerate(dirs):
        splus = SensorInput(**{**s.__dict__})
        sminus = SensorInput(**{**s.__dict__})
        if d.slot == "nu":
            splus.nu += h
            sminus.nu -= h
        else:
            setattr(splus, "u_" + d.slot, getattr(s, "u_" + d.slot) + h * d.vector)
            setattr(sminus, "u_" + d.slot, getattr(s, "u_" + d.slot) - h * d.vector)
        fp = backend.solve(splus).flux_end("t", times)
        fm = backend.solve(sminus).flux_end("t", times)
        assert rel_l2(sol.d_flux_end(q, "t", times), (fp - fm) / (2 * h)) < 1e-6


def test_oracle_zero_input_zero_solution():
    orc = OracleSurrogate(eps=0.05, n=16)
    s = SensorInput(np.zeros(21), np.zeros(21), np.zeros(21), 1.3, "inner")
    sol = orc.solve(s)
    assert np.all(sol.traj == 0.0)
    assert evaluate(orc, s, 0.5, 0.5) == 0.0
    assert flux(orc, s, 0.5, 0.5) == 0.0


def test_oracle_steady_uniform_flux():
    orc = OracleSurrogate(eps=0.05, n=16)
    c, nu = 0.4, 1.1
    f_c = nu * c * (1 - c)
    s = SensorInput(np.full(21, f_c), np.full(21, f_c), np.full(21, c), nu, "inner")
    sol = orc.solve(s)
    assert np.abs(sol.traj - c).max() < 1e-13
    for x in (0.0, 0.31, 1.0):
        assert sol.flux(0.5, x) == pytest.approx(f_c, abs=1e-12)


def test_oracle_matches_monolithic_restriction():
    g, bc = make_training_instance(chain_graph(3), seed=42, rate_amplitude=0.8,
                                   velocity_range=(0.5, 1.0))
    d = Discretization.create(g, n=64)
    bc = smooth_initial(d, bc, 0.02, SensorGrids())
    traj = simulate(d, bc)
    sens = extract_sensors(traj, bc, SensorGrids())
    orc = OracleSurrogate(eps=d.eps, n=64, alpha=d.alpha)
    for i in range(g.n_edges):
        sol = orc.solve(sens[i])
        assert rel_l2(sol.traj, traj.edge_states(i)) < 1e-3


def test_oracle_exact_reproduction_native_grids(chain3_instance):
    g, bc, d, traj = chain3_instance
    sens = extract_sensors(traj, bc, None)
    orc = OracleSurrogate(eps=d.eps, n=32, alpha=d.alpha)
    for i in range(g.n_edges):
        sol = orc.solve(sens[i], init_values=traj.edge_states(i)[0])
        assert np.abs(sol.traj - traj.edge_states(i)).max() < 1e-12


def test_oracle_tangent_endpoints_match_fd(chain3_instance):
    g, bc, d, traj = chain3_instance
    s = extract_sensors(traj, bc, SensorGrids())[1]
    orc = OracleSurrogate(eps=d.eps, n=24, alpha=d.alpha)
    dirs = [Direction("origin", np.cos(np.arange(101) / 7.0)),
            Direction("target", np.ones(101)),
            Direction("init", np.sin(np.arange(101) / 5.0)),
            Direction("nu", 1.0)]
    sol = orc.solve(s, dirs)
    times = np.linspace(0, 1, 9)
    h = 1e-6
    for q, dd in enumerate(dirs):
        sp = SensorInput(**{**s.__dict__})
        sm = SensorInput(**{**s.__dict__})
        if dd.slot == "nu":
            sp.nu += h
            sm.nu -= h
        else:
            setattr(sp, "u_" + dd.slot, getattr(s, "u_" + dd.slot) + h * dd.vector)
            setattr(sm, "u_" + dd.slot, getattr(s, "u_" + dd.slot) - h * dd.vector)
        for end in ("o", "t"):
            fp = orc.solve(sp).flux_end(end, times)
            fm = orc.solve(sm).flux_end(end, times)
            fd = (fp - fm) / (2 * h)
            assert np.abs(sol.d_flux_end(q, end, times) - fd).max() < 1e-6
            rp = orc.solve(sp).rho_end(end, times)
            rm = orc.solve(sm).rho_end(end, times)
            fd_r = (rp - rm) / (2 * h)
            assert np.abs(sol.d_rho_end(q, end, times) - fd_r).max() < 1e-6
        # midpoint tangents too
        fp = orc.solve(sp).flux_at(0.5, times)
        fm = orc.solve(sm).flux_at(0.5, times)
        assert np.abs(sol.d_flux_at_all(0.5, times)[q] - (fp - fm) / (2 * h)).max() < 1e-6


def test_edge_loss_zero_model_zero_sensors():
    model = small_model(12)
    for name in model.tensor_names():
        if name.startswith("branch.out") or name.startswith("trunk.out"):
            model.weights[name] = np.zeros_like(model.weights[name])
    model.__post_init__()
    s = SensorInput(np.zeros(21), np.zeros(21), np.zeros(21), 1.0, "inner")
    backend = DeepOnetSurrogate(model)
    pde_pts = np.random.default_rng(0).uniform(0, 1, (16, 2))
    l_pde, l_init, l_edge = edge_loss(backend, s, pde_pts, np.linspace(0, 1, 8),
                                      np.linspace(0, 1, 8))
    assert l_pde == 0.0 and l_init == 0.0 and l_edge == 0.0


def test_edge_loss_oracle_consistent_sensors(chain3_instance):
    g, bc, d, traj = chain3_instance
    sens = extract_sensors(traj, bc, SensorGrids())
    orc = OracleSurrogate(eps=d.eps, n=32, alpha=d.alpha)
    rng = np.random.default_rng(0)
    for i in range(g.n_edges):
        pde_pts = rng.uniform(0.1, 0.9, (8, 2))
        _, l_init, l_edge = edge_loss(orc, sens[i], pde_pts,
                                      np.linspace(0, 1, 33), np.linspace(0, 1, 33))
        assert l_edge < 1e-4
        assert l_init < 1e-4


def test_archive_roundtrip(tmp_path):
    model = small_model(13, edge_type="outflow")
    save_model(model, tmp_path / "m")
    loaded = load_model(tmp_path / "m")
    assert loaded.edge_type == "outflow"
    rng = np.random.default_rng(5)
    s = small_sensor(14, edge_type="outflow")
    a = DeepOnetSurrogate(model).solve(s)
    b = DeepOnetSurrogate(loaded).solve(s)
    for _ in range(100):
        t, x = rng.uniform(0, 1, 2)
        assert a.rho(t, x) == b.rho(t, x)
    # byte stability
    save_model(loaded, tmp_path / "m2")
    for f in sorted((tmp_path / "m").iterdir()):
        assert f.read_bytes() == (tmp_path / "m2" / f.name).read_bytes()


def test_archive_corruption_detected(tmp_path):
    model = small_model(15)
    save_model(model, tmp_path / "m")
    blob = (tmp_path / "m" / "branch_out_W.bin").read_bytes()
    (tmp_path / "m" / "branch_out_W.bin").write_bytes(blob[:-8] + b"\x00" * 8)
    with pytest.raises(FormatError, match="checksum"):
        load_model(tmp_path / "m")


def test_archive_truncation_detected(tmp_path):
    model = small_model(16)
    save_model(model, tmp_path / "m")
    blob = (tmp_path / "m" / "trunk_out_W.bin").read_bytes()
    (tmp_path / "m" / "trunk_out_W.bin").write_bytes(blob[:-4])
    with pytest.raises(FormatError):
        load_model(tmp_path / "m")


def test_surrogate_set_eps_mismatch_rejected():
    a = OracleSurrogate(eps=0.05)
    b = OracleSurrogate(eps=0.06)
    with pytest.raises(ValueError, match="eps"):
        SurrogateSet({"inflow": a, "inner": b, "outflow": a})


def test_evaluate_domain_errors():
    orc = OracleSurrogate(eps=0.05, n=8)
    s = SensorInput(np.zeros(11), np.zeros(11), np.zeros(11), 1.0, "inner")
    with pytest.raises(ValueError, match="outside"):
        evaluate(orc, s, 1.5, 0.5)
    with pytest.raises(ValueError, match="outside"):
        evaluate(orc, s, 0.5, -0.2)


def test_deeponet_sensor_dim_mismatch():
    model = small_model(17)
    s = SensorInput(np.zeros(11), np.zeros(11), np.zeros(11), 1.0, "inner")
    with pytest.raises(ValueError, match="expects"):
        DeepOnetSurrogate(model).solve(s)
