import json

import numpy as np
import pytest

from driftgraph.cli import main
from driftgraph.formats import read_json
from driftgraph.gpdata import SensorGrids
from driftgraph.graphs import fig1_graph, write_graph_file
from driftgraph.surrogate import DeepOnetModel, save_model


def run(args):
    return main(args)


def write_cfg(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return str(p)


def test_defaults_prints(capsys):
    assert run(["defaults"]) == 0
    out = capsys.readouterr().out
    assert "[coupling]" in out and "[inverse]" in out


def test_simulate_runs_and_is_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, """
[discretization]
n = 12
[graph]
builtin = "chain3"
""")
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    assert run(["simulate", "--config", cfg, "--seed", "5", "--out", str(out1)]) == 0
    assert run(["simulate", "--config", cfg, "--seed", "5", "--out", str(out2)]) == 0
    assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
    diag = read_json(out1 / "diagnostics.json")
    assert diag["ok"] is True
    assert (out1 / "config.resolved.toml").exists()


def test_simulate_with_graph_file(tmp_path):
    gpath = tmp_path / "g.json"
    write_graph_file(fig1_graph(), gpath)
    cfg = write_cfg(tmp_path, "[discretization]\nn = 8\n")
    assert run(["simulate", "--config", cfg, "--graph", str(gpath),
                "--out", str(tmp_path / "o")]) == 0


def test_generate_counts(tmp_path, capsys):
    cfg = write_cfg(tmp_path, """
[generate]
n_instances = 1
[discretization]
n = 12
[sensors]
n_origin = 21
n_target = 21
n_init = 21
""")
    assert run(["generate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    man = read_json(tmp_path / "o" / "dataset" / "manifest.json")
    counts = {k: v["count"] for k, v in man["records"].items()}
    assert counts == {"inflow": 4, "inner": 6, "outflow": 4}


def test_couple_oracle_small(tmp_path, capsys):
    cfg = write_cfg(tmp_path, """
[graph]
builtin = "chain3"
[discretization]
n = 16
[surrogate]
n_oracle = 16
[coupling]
iterations = 60
lr = 0.03
""")
    assert run(["couple", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "o"),
                "--surrogate", "oracle"]) == 0
    rep = read_json(tmp_path / "o" / "report.json")
    assert rep["parameters"] == 40
    assert np.isfinite(rep["final_loss"])
    assert "l2_rel_vs_fvm" in rep
    assert (tmp_path / "o" / "loss.csv").exists()
    assert (tmp_path / "o" / "solution.csv").exists()


def test_invert_oracle_small(tmp_path):
    cfg = write_cfg(tmp_path, """
[graph]
builtin = "chain3"
[discretization]
n = 12
[surrogate]
n_oracle = 12
[sensors]
n_meas = 21
[inverse]
iterations = 40
""")
    assert run(["invert", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "errors.csv").read_text().splitlines()
    assert rows[0] == "graph,noise,err_init,err_vel,l2_solution,metric"
    assert len(rows) == 3
    assert (tmp_path / "o" / "velocities.csv").exists()
    assert (tmp_path / "o" / "recovered_init.csv").exists()


def test_errors_ladder_tiny(tmp_path):
    cfg = write_cfg(tmp_path, """
[graph]
builtin = "chain2"
[discretization]
n = 8
[surrogate]
n_oracle = 8
[sensors]
n_meas = 11
[inverse]
iterations = 5
[errors]
noise_levels = [0.1, 0.01]
n_runs = 1
""")
    assert run(["errors", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "errors.csv").read_text().splitlines()
    assert rows[0] == "graph,noise,err_init,err_vel,l2_solution,metric,seed"
    assert len(rows) == 1 + 2 * 2
    assert (tmp_path / "o" / "errors_median.csv").exists()


def test_edge_loss_hook(tmp_path):
    model = DeepOnetModel.random(0, n_sensor=3 * 21 + 1, width=8, depth=2,
                                 eps=0.05, edge_type="inner")
    save_model(model, tmp_path / "model")
    rng = np.random.default_rng(1)
    fixtures = {"fixtures": [{
        "u_origin": rng.uniform(0, 0.3, 21).tolist(),
        "u_target": rng.uniform(0, 0.3, 21).tolist(),
        "u_init": rng.uniform(0, 1, 21).tolist(),
        "nu": 1.1,
        "edge_type": "inner",
        "pde_points": rng.uniform(0, 1, (5, 2)).tolist(),
        "init_points": np.linspace(0, 1, 5).tolist(),
        "bc_times": np.linspace(0, 1, 5).tolist(),
    }]}
    fx = tmp_path / "fx.json"
    fx.write_text(json.dumps(fixtures))
    out = tmp_path / "losses.json"
    assert run(["edge-loss", "--model", str(tmp_path / "model"),
                "--fixtures", str(fx), "--out", str(out)]) == 0
    res = read_json(out)["results"][0]
    assert all(np.isfinite(res[k]) for k in ("l_pde", "l_init", "l_edge"))


def test_bad_graph_file_is_friendly(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = run(["simulate", "--graph", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_config_key_is_friendly(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[run]\nbogus = 3\n")
    assert run(["simulate", "--config", cfg]) == 2
    assert "error:" in capsys.readouterr().err
