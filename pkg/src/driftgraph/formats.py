"""On-disk formats: canonical JSON, binary snapshots, CSV tables.

All binary payloads are little-endian; JSON is emitted canonically (sorted
keys, two-space indent, trailing newline) so that load -> save round-trips
are byte-stable.
"""

from __future__ import annotations

import json

import numpy as np

SNAPSHOT_MAGIC = b"DGSNAP1\n"


class FormatError(ValueError):
    """Corrupt or unsupported file content."""


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_snapshot(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Binary snapshot: magic, one canonical JSON header line, then raw
    little-endian float64 blocks in the header's array order."""
    meta = dict(header)
    meta["arrays"] = [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise FormatError(f"{path}: not a snapshot file")
        line = fh.readline()
        try:
            meta = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: bad snapshot header: {exc}") from exc
        arrays = {}
        for spec in meta.pop("arrays"):
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise FormatError(f"{path}: truncated array {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(spec["shape"]).copy()
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after arrays")
    return meta, arrays


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path, columns: list[str], rows) -> None:
    """Plain CSV with deterministic float formatting."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(
                format_float(v) if isinstance(v, float) else str(v) for v in row
            ) + "\n")


def write_trajectory_csv(path, traj) -> None:
    """Columnar trajectory export: (time, id, cell, x, rho); vertex rows use
    cell = -1 and the vertex id."""
    d = traj.disc
    rows = []
    for k, t in enumerate(traj.times):
        state = traj.states[k]
        for i in range(d.graph.n_edges):
            centers = d.cell_centers(i)
            idx = d.edge_cell_indices(i)
            for c in range(1, d.resolution[i]):
                rows.append((float(t), f"e{i}", c, float(centers[c]), float(state[idx[c]])))
        for v in d.graph.vertices:
            rows.append((float(t), v, -1, 0.0, float(state[d.vertex_index[v]])))
    write_csv(path, ["time", "id", "cell", "x", "rho"], rows)


def write_trajectory_snapshot(path, traj) -> None:
    from .graphs import graph_to_spec

    d = traj.disc
    header = {
        "kind": "trajectory",
        "graph": graph_to_spec(d.graph),
        "resolution": [d.resolution[i] for i in range(d.graph.n_edges)],
        "tau": d.tau,
        "n_t": d.n_t,
        "eps": d.eps,
        "alpha": d.alpha,
    }
    write_snapshot(path, header, {"times": traj.times, "states": traj.states})


def read_trajectory_snapshot(path):
    from .fvm import Discretization, Trajectory
    from .graphs import build_graph

    meta, arrays = read_snapshot(path)
    if meta.get("kind") != "trajectory":
        raise FormatError(f"{path}: not a trajectory snapshot")
    g = build_graph(meta["graph"])
    disc = Discretization(
        graph=g,
        resolution={i: n for i, n in enumerate(meta["resolution"])},
        tau=float(meta["tau"]),
        n_t=int(meta["n_t"]),
        eps=float(meta["eps"]),
        alpha=float(meta["alpha"]),
    )
    return Trajectory(disc, arrays["times"], arrays["states"])
