import json

import numpy as np
import pytest

from driftgraph import config as cfgmod
from driftgraph.formats import (
    FormatError,
    read_snapshot,
    read_trajectory_snapshot,
    write_csv,
    write_snapshot,
    write_trajectory_csv,
    write_trajectory_snapshot,
)
from driftgraph.fvm import Discretization, simulate
from driftgraph.graphs import BoundaryData, chain_graph


def test_snapshot_roundtrip(tmp_path):
    p = tmp_path / "x.snap"
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1.5])}
    write_snapshot(p, {"kind": "test"}, arrays)
    meta, back = read_snapshot(p)
    assert meta["kind"] == "test"
    assert np.array_equal(back["a"], arrays["a"])
    blob1 = p.read_bytes()
    write_snapshot(p, {"kind": "test"}, back)
    assert p.read_bytes() == blob1


def test_snapshot_errors(tmp_path):
    p = tmp_path / "x.snap"
    p.write_bytes(b"NOTASNAP" + b"\x00" * 16)
    with pytest.raises(FormatError, match="not a snapshot"):
        read_snapshot(p)
    arrays = {"a": np.arange(4.0)}
    write_snapshot(p, {}, arrays)
    blob = p.read_bytes()
    p.write_bytes(blob[:-8])
    with pytest.raises(FormatError, match="truncated"):
        read_snapshot(p)
    p.write_bytes(blob + b"xx")
    with pytest.raises(FormatError, match="trailing"):
        read_snapshot(p)


def test_trajectory_snapshot_roundtrip(tmp_path):
    g = chain_graph(3)
    d = Discretization.create(g, n=6, horizon=0.2)
    bc = BoundaryData.zero(g)
    bc.init = {i: np.linspace(0.2, 0.8, 11) for i in range(3)}
    traj = simulate(d, bc)
    p = tmp_path / "t.snap"
    write_trajectory_snapshot(p, traj)
    back = read_trajectory_snapshot(p)
    assert np.array_equal(back.states, traj.states)
    assert back.disc.resolution == d.resolution
    blob1 = p.read_bytes()
    write_trajectory_snapshot(p, back)
    assert p.read_bytes() == blob1


def test_trajectory_csv_deterministic(tmp_path):
    g = chain_graph(2)
    d = Discretization.create(g, n=4, horizon=0.2)
    bc = BoundaryData.zero(g)
    bc.init = {i: np.full(5, 0.3) for i in range(2)}
    traj = simulate(d, bc)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trajectory_csv(p1, traj)
    write_trajectory_csv(p2, traj)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header == "time,id,cell,x,rho"


def test_csv_float_format(tmp_path):
    p = tmp_path / "x.csv"
    write_csv(p, ["a", "b"], [(1.0 / 3.0, "s"), (2, 0.1)])
    lines = p.read_text().splitlines()
    assert lines[0] == "a,b"
    assert lines[1].startswith("0.3333333333333333")


def test_config_parse_and_dump_roundtrip():
    text = cfgmod.dump_toml(cfgmod.DEFAULTS)
    parsed = cfgmod.parse_toml(text)
    assert parsed == cfgmod.DEFAULTS
    assert cfgmod.dump_toml(parsed) == text


def test_config_types():
    parsed = cfgmod.parse_toml("""
[run]
seed = 42
out = "results"

[gp]
velocity_range = [0.5, 1.5]
resample_velocities = false
""")
    assert parsed["run"]["seed"] == 42
    assert parsed["run"]["out"] == "results"
    assert parsed["gp"]["velocity_range"] == [0.5, 1.5]
    assert parsed["gp"]["resample_velocities"] is False


def test_config_unknown_key_rejected(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[run]\nbogus = 1\n")
    with pytest.raises(cfgmod.ConfigError, match="unknown option"):
        cfgmod.load_config(p)
    p.write_text("[nosuch]\nx = 1\n")
    with pytest.raises(cfgmod.ConfigError, match="unknown section"):
        cfgmod.load_config(p)


def test_config_syntax_errors():
    with pytest.raises(cfgmod.ConfigError, match="section"):
        cfgmod.parse_toml("x = 1\n")
    with pytest.raises(cfgmod.ConfigError, match="key = value"):
        cfgmod.parse_toml("[a]\nnonsense\n")
    with pytest.raises(cfgmod.ConfigError, match="cannot parse"):
        cfgmod.parse_toml("[a]\nx = what\n")
