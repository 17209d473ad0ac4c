"""Random-field data generation and sensor extraction.

Initial profiles and boundary rate series are drawn from a finite
radial-basis expansion g(x) = sum_k eta_k exp(-(x - x_k)^2 / ell^2) with
standard normal coefficients on equally spaced centers.  Raw fields are
standardized pointwise (the expansion's variance is known in closed form)
and then mapped into valid ranges: logistic for initial profiles in (0, 1),
positive part times an amplitude for rate series.

Sensor extraction turns a full-graph trajectory into per-edge conditioning
tuples (origin series, target series, initial profile, velocity): boundary
rates where an endpoint is exterior and discrete flux traces where it is
interior, the latter attributed so that signed sums at interior vertices
vanish identically.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from . import formats
from .fvm import Discretization, GraphSystem, Trajectory, project_initial, simulate
from .graphs import BoundaryData, Edge, MetricGraph, build_graph, graph_to_spec
from .surrogate import SensorInput

TRAIN_PROFILE = {"n_gp": 512, "length_scale": 0.5}
TEST_PROFILE = {"n_gp": 468, "length_scale": 0.4}


def logistic(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


@dataclass
class GpField:
    """Finite RBF expansion with normal coefficients."""

    centers: np.ndarray
    coefficients: np.ndarray
    length_scale: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.exp(-((x[..., None] - self.centers) ** 2) / self.length_scale**2)
        return k @ self.coefficients

    def pointwise_std(self, x):
        """Exact standard deviation of the expansion at x over coefficient
        draws."""
        x = np.asarray(x, dtype=float)
        k = np.exp(-((x[..., None] - self.centers) ** 2) / self.length_scale**2)
        return np.sqrt((k**2).sum(axis=-1))

    def standardized(self, x):
        return self(x) / self.pointwise_std(x)


def sample_gp(seed, n_gp: int = 512, length_scale: float = 0.5,
              domain: tuple[float, float] = (0.0, 1.0)) -> GpField:
    """Reproducible field on ``domain``; ``seed`` may be anything accepted by
    numpy's default_rng (ints or SeedSequences)."""
    if n_gp < 1 or length_scale <= 0:
        raise ValueError("need n_gp >= 1 and length_scale > 0")
    rng = np.random.default_rng(seed)
    centers = np.linspace(domain[0], domain[1], n_gp)
    return GpField(centers, rng.standard_normal(n_gp), length_scale)


@dataclass
class SensorGrids:
    """Uniform sensor grids: endpoint series over [0, horizon], initial
    profile over [0, edge length]."""

    n_origin: int = 101
    n_target: int = 101
    n_init: int = 101
    horizon: float = 1.0

    @property
    def n_sensor(self) -> int:
        return self.n_origin + self.n_target + self.n_init + 1

    def t_origin(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_origin)

    def t_target(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_target)

    def x_init(self, length: float = 1.0) -> np.ndarray:
        return np.linspace(0.0, length, self.n_init)


def with_velocities(g: MetricGraph, velocities) -> MetricGraph:
    """Copy of the graph with per-edge velocities replaced."""
    spec = graph_to_spec(g)
    for rec, nu in zip(spec["edges"], np.asarray(velocities, dtype=float)):
        rec["velocity"] = float(nu)
    return build_graph(spec)


def make_training_instance(
    g: MetricGraph,
    seed,
    profile: str = "train",
    grids: SensorGrids | None = None,
    rate_amplitude: float = 1.0,
    rate_cap: float | None = None,
    velocity_range: tuple[float, float] | None = (0.5, 1.5),
) -> tuple[MetricGraph, BoundaryData]:
    """One random problem instance: GP initial profile per edge, GP rate
    series per declared inflow/outflow vertex, optionally resampled edge
    velocities.  Returns the (possibly re-velocitied) graph and the data."""
    if profile not in ("train", "test"):
        raise ValueError("profile must be 'train' or 'test'")
    params = TRAIN_PROFILE if profile == "train" else TEST_PROFILE
    grids = grids or SensorGrids()
    root = np.random.SeedSequence(_seed_entropy(seed))
    children = root.spawn(g.n_edges + len(g.inflow_vertices) + len(g.outflow_vertices) + 1)

    vel_rng = np.random.default_rng(children[0])
    if velocity_range is not None:
        lo, hi = velocity_range
        g = with_velocities(g, vel_rng.uniform(lo, hi, g.n_edges))

    bc = BoundaryData(horizon=grids.horizon)
    pos = 1
    for i in range(g.n_edges):
        field = sample_gp(children[pos], domain=(0.0, g.edges[i].length), **params)
        bc.init[i] = logistic(field.standardized(grids.x_init(g.edges[i].length)))
        pos += 1
    for table, names in (("inflow", g.inflow_vertices), ("outflow", g.outflow_vertices)):
        for v in names:
            field = sample_gp(children[pos], domain=(0.0, grids.horizon), **params)
            series = rate_amplitude * np.maximum(field.standardized(np.linspace(
                0.0, grids.horizon, grids.n_origin)), 0.0)
            if rate_cap is not None:
                series = np.minimum(series, rate_cap)
            getattr(bc, table)[v] = series
            pos += 1
    bc.validate(g)
    return g, bc


def _seed_entropy(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return int.from_bytes(hashlib.sha256(repr(seed).encode()).digest()[:8], "little")


def smooth_initial(disc: Discretization, bc: BoundaryData, t_smooth: float,
                   grids: SensorGrids | None = None) -> BoundaryData:
    """Run the scheme for a short interval to remove vertex-incompatible
    jumps from the initial data; returns boundary data whose initial profiles
    are the smoothed state sampled on the init sensor grid.  t_smooth = 0
    reduces to projection and resampling."""
    grids = grids or SensorGrids(horizon=disc.horizon)
    n_steps = int(np.ceil(t_smooth / disc.tau - 1e-12)) if t_smooth > 0 else 0
    state = project_initial(disc, bc.init)
    if n_steps:
        system = GraphSystem(disc)
        for _ in range(n_steps):
            state = system.step(state, bc)
    short = Trajectory(disc, np.array([state.time]), state.values[None, :])
    out = BoundaryData(horizon=bc.horizon, inflow=dict(bc.inflow), outflow=dict(bc.outflow))
    for i in range(disc.graph.n_edges):
        xs = grids.x_init(disc.graph.edges[i].length)
        out.init[i] = np.clip(short.value(i, state.time, xs), 0.0, 1.0)
    return out


def extract_sensors(traj: Trajectory, bc: BoundaryData,
                    grids: SensorGrids | None = None) -> dict[int, SensorInput]:
    """Per-edge surrogate conditioning tuples from a full-graph trajectory.

    Interior endpoints carry discrete flux traces; exterior endpoints carry
    the boundary rate series itself (the Robin datum of the edge type).
    ``grids=None`` keeps the solver's native time grid for the traces."""
    d = traj.disc
    g = d.graph
    if grids is None:
        # native mode: one sample per solver step on the uniform [0, T] grid,
        # which downstream interpolation hits exactly
        grids = SensorGrids(n_origin=d.n_t + 1, n_target=d.n_t + 1,
                            horizon=d.horizon)
    t_o = grids.t_origin()
    t_t = grids.t_target()
    flux_times = traj.times[:-1]
    out = {}
    for i in range(g.n_edges):
        e = g.edges[i]
        etype = g.edge_types[i]
        if e.origin in g.interior_vertices:
            u_origin = np.interp(t_o, flux_times, traj.vertex_flux(i, "o"))
        else:
            u_origin = bc.rate_at("inflow", e.origin, t_o)
        if e.target in g.interior_vertices:
            u_target = np.interp(t_t, flux_times, traj.vertex_flux(i, "t"))
        else:
            u_target = bc.rate_at("outflow", e.target, t_t)
        u_init = traj.value(i, 0.0, grids.x_init(e.length))
        out[i] = SensorInput(
            u_origin=u_origin, u_target=u_target, u_init=np.asarray(u_init),
            nu=e.velocity, edge_type=etype, length=e.length, horizon=d.horizon,
        )
    return out


# ---------------------------------------------------------------------------
# Dataset archives consumed by the trainer.

def generate_dataset(
    out_dir,
    n_instances: int,
    seed: int = 0,
    graphs: list[MetricGraph] | None = None,
    profile: str = "train",
    grids: SensorGrids | None = None,
    n: int = 64,
    eps: float = 0.05,
    alpha: float = 1.0,
    t_smooth: float = 0.02,
    velocity_range: tuple[float, float] = (0.5, 1.5),
    rate_amplitude: float = 1.0,
) -> dict:
    """Solve ``n_instances`` random instances on every data graph and store
    the per-edge sensor tuples grouped by edge type.

    Archive layout: manifest.json plus one raw little-endian float32 matrix
    per edge type, rows = records (u_origin | u_target | u_init | nu).
    """
    import pathlib

    from .graphs import training_graphs

    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graphs = graphs if graphs is not None else training_graphs()
    grids = grids or SensorGrids()

    records = {"inflow": [], "inner": [], "outflow": []}
    provenance = {"inflow": [], "inner": [], "outflow": []}
    for k in range(n_instances):
        inst_seed = seed + k
        for gi, g0 in enumerate(graphs):
            g, bc = make_training_instance(
                g0, (inst_seed, gi), profile=profile, grids=grids,
                rate_amplitude=rate_amplitude, velocity_range=velocity_range,
            )
            disc = Discretization.create(g, n=n, horizon=grids.horizon, eps=eps, alpha=alpha)
            bc_s = smooth_initial(disc, bc, t_smooth, grids)
            traj = simulate(disc, bc_s)
            for i, s in extract_sensors(traj, bc_s, grids).items():
                records[s.edge_type].append(s.to_vector())
                provenance[s.edge_type].append([inst_seed, gi, i])

    manifest = {
        "format": "driftgraph-dataset",
        "version": 1,
        "profile": profile,
        "grids": {
            "n_origin": grids.n_origin, "n_target": grids.n_target,
            "n_init": grids.n_init, "horizon": grids.horizon,
        },
        "eps": eps,
        "alpha": alpha,
        "resolution": n,
        "t_smooth": t_smooth,
        "seed": seed,
        "n_instances": n_instances,
        "velocity_range": list(velocity_range),
        "rate_amplitude": rate_amplitude,
        "graphs": [graph_to_spec(g) for g in graphs],
        "records": {},
    }
    for etype, rows in records.items():
        mat = np.asarray(rows, dtype="<f4") if rows else np.zeros((0, grids.n_sensor), "<f4")
        fname = f"{etype}.f32"
        mat.tofile(out_dir / fname)
        manifest["records"][etype] = {
            "file": fname, "count": int(mat.shape[0]), "record_dim": grids.n_sensor,
            "provenance": provenance[etype],
        }
    formats.write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_dataset(path) -> tuple[dict, dict[str, np.ndarray]]:
    import pathlib

    path = pathlib.Path(path)
    manifest = formats.read_json(path / "manifest.json")
    if manifest.get("format") != "driftgraph-dataset":
        raise formats.FormatError(f"{path}: not a dataset archive")
    data = {}
    for etype, rec in manifest["records"].items():
        raw = np.fromfile(path / rec["file"], dtype="<f4")
        if raw.size != rec["count"] * rec["record_dim"]:
            raise formats.FormatError(f"{path}: truncated {rec['file']}")
        data[etype] = raw.reshape(rec["count"], rec["record_dim"])
    return manifest, data


def save_dataset(path, manifest: dict, data: dict[str, np.ndarray]) -> None:
    import pathlib

    path = pathlib.Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for etype, rec in manifest["records"].items():
        np.ascontiguousarray(data[etype], dtype="<f4").tofile(path / rec["file"])
    formats.write_json(path / "manifest.json", manifest)
