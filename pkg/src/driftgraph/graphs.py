"""Directed metric graphs: data model, validation, vertex/edge classification.

A metric graph is a directed graph whose edges carry interval lengths and
per-edge velocities.  Vertices split into interior ones (at least one incoming
and one outgoing edge, flux-balance coupling applies there) and exterior ones
(all edges point the same way, boundary rates apply there).  Edges are
classified as inflow / inner / outflow depending on which endpoints are
exterior; an edge with two exterior endpoints has no class and is rejected.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

INFLOW = "inflow"
INNER = "inner"
OUTFLOW = "outflow"

EDGE_TYPES = (INFLOW, INNER, OUTFLOW)


class GraphError(ValueError):
    """Invalid graph description or unsupported topology."""


@dataclass(frozen=True)
class Edge:
    origin: str
    target: str
    length: float = 1.0
    velocity: float = 1.0


@dataclass
class MetricGraph:
    """Validated directed metric graph with derived incidence structure.

    Immutable after construction (treat all fields as read-only); safe for
    concurrent reads.  Edges are identified by their index in ``edges``.
    """

    vertices: list[str]
    edges: list[Edge]
    in_edges: dict[str, list[int]] = field(default_factory=dict)
    out_edges: dict[str, list[int]] = field(default_factory=dict)
    interior_vertices: list[str] = field(default_factory=list)
    exterior_vertices: list[str] = field(default_factory=list)
    edge_types: dict[int, str] = field(default_factory=dict)
    inflow_vertices: list[str] = field(default_factory=list)
    outflow_vertices: list[str] = field(default_factory=list)

    def incident(self, v: str) -> list[int]:
        return self.in_edges[v] + self.out_edges[v]

    def normal(self, edge_index: int, v: str) -> int:
        """Outward normal of an edge at one of its endpoints: -1 at the
        origin, +1 at the target."""
        e = self.edges[edge_index]
        if v == e.origin:
            return -1
        if v == e.target:
            return 1
        raise GraphError(f"vertex {v!r} is not an endpoint of edge {edge_index}")

    def is_interior(self, v: str) -> bool:
        return bool(self.in_edges[v]) and bool(self.out_edges[v])

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edges_of_type(self, edge_type: str) -> list[int]:
        return [i for i, t in self.edge_types.items() if t == edge_type]

    def total_length(self) -> float:
        return sum(e.length for e in self.edges)


def build_graph(spec: dict, on_disconnected: str = "warn") -> MetricGraph:
    """Build and validate a MetricGraph from a plain description record.

    ``spec`` carries "vertices" (list of ids or of {"id": ...} records),
    "edges" (list of records with origin/target and optional length/velocity),
    and optional "inflow_vertices"/"outflow_vertices" role lists.

    Raises GraphError on empty graphs, duplicate vertex ids, exact duplicate
    edge rows, nonpositive lengths, references to unknown vertices, isolated
    vertices, and (via classification) edges with two exterior endpoints.
    Parallel edges that differ in length or velocity are allowed.
    """
    raw_vertices = spec.get("vertices", [])
    raw_edges = spec.get("edges", [])
    if not raw_vertices or not raw_edges:
        raise GraphError("graph needs at least one vertex and one edge")

    vertices = []
    for rec in raw_vertices:
        vid = rec["id"] if isinstance(rec, dict) else str(rec)
        vertices.append(str(vid))
    if len(set(vertices)) != len(vertices):
        raise GraphError("duplicate vertex id")

    vset = set(vertices)
    edges = []
    seen_rows = set()
    for rec in raw_edges:
        if isinstance(rec, dict):
            e = Edge(
                origin=str(rec["origin"]),
                target=str(rec["target"]),
                length=float(rec.get("length", 1.0)),
                velocity=float(rec.get("velocity", 1.0)),
            )
        else:
            origin, target = rec[0], rec[1]
            length = float(rec[2]) if len(rec) > 2 else 1.0
            velocity = float(rec[3]) if len(rec) > 3 else 1.0
            e = Edge(str(origin), str(target), length, velocity)
        if e.origin not in vset or e.target not in vset:
            raise GraphError(f"edge ({e.origin}, {e.target}) references unknown vertex")
        if e.origin == e.target:
            raise GraphError(f"self-loop at vertex {e.origin!r} is not supported")
        if e.length <= 0:
            raise GraphError(f"edge ({e.origin}, {e.target}) has nonpositive length")
        if e.velocity < 0:
            raise GraphError(f"edge ({e.origin}, {e.target}) has negative velocity")
        if e.velocity == 0:
            warnings.warn(f"edge ({e.origin}, {e.target}) has zero velocity", stacklevel=2)
        row = (e.origin, e.target, e.length, e.velocity)
        if row in seen_rows:
            raise GraphError(f"duplicate edge row {row}")
        seen_rows.add(row)
        edges.append(e)

    in_edges: dict[str, list[int]] = {v: [] for v in vertices}
    out_edges: dict[str, list[int]] = {v: [] for v in vertices}
    for i, e in enumerate(edges):
        out_edges[e.origin].append(i)
        in_edges[e.target].append(i)

    for v in vertices:
        if not in_edges[v] and not out_edges[v]:
            raise GraphError(f"vertex {v!r} has no incident edges")

    interior = [v for v in vertices if in_edges[v] and out_edges[v]]
    exterior = [v for v in vertices if not (in_edges[v] and out_edges[v])]

    g = MetricGraph(
        vertices=vertices,
        edges=edges,
        in_edges=in_edges,
        out_edges=out_edges,
        interior_vertices=interior,
        exterior_vertices=exterior,
    )
    g.edge_types = classify_edges(g)

    declared_in = [str(v) for v in spec.get("inflow_vertices", [])]
    declared_out = [str(v) for v in spec.get("outflow_vertices", [])]
    for v in declared_in:
        if v not in vset or in_edges.get(v):
            raise GraphError(f"declared inflow vertex {v!r} is not a pure source")
    for v in declared_out:
        if v not in vset or out_edges.get(v):
            raise GraphError(f"declared outflow vertex {v!r} is not a pure sink")
    g.inflow_vertices = declared_in or [v for v in exterior if out_edges[v]]
    g.outflow_vertices = declared_out or [v for v in exterior if in_edges[v]]

    if not _is_connected(g):
        msg = "graph is not (weakly) connected"
        if on_disconnected == "reject":
            raise GraphError(msg)
        warnings.warn(msg, stacklevel=2)
    return g


def classify_edges(g: MetricGraph) -> dict[int, str]:
    """Classify every edge as inflow, inner, or outflow.

    inflow: origin exterior; outflow: target exterior; inner: both interior.
    An edge with two exterior endpoints (a direct source-to-sink edge) has no
    class under this taxonomy and raises GraphError.
    """
    ext = set(g.exterior_vertices)
    types = {}
    for i, e in enumerate(g.edges):
        o_ext, t_ext = e.origin in ext, e.target in ext
        if o_ext and t_ext:
            raise GraphError(
                f"edge ({e.origin}, {e.target}) connects two exterior vertices; "
                "single-edge through graphs are not supported"
            )
        types[i] = INFLOW if o_ext else (OUTFLOW if t_ext else INNER)
    return types


def _is_connected(g: MetricGraph) -> bool:
    seen = {g.vertices[0]}
    stack = [g.vertices[0]]
    while stack:
        v = stack.pop()
        for i in g.incident(v):
            e = g.edges[i]
            for w in (e.origin, e.target):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
    return len(seen) == len(g.vertices)


# ---------------------------------------------------------------------------
# Graph spec files (JSON).  Field names are part of the format contract.

def graph_to_spec(g: MetricGraph) -> dict:
    return {
        "vertices": [{"id": v} for v in g.vertices],
        "edges": [
            {"origin": e.origin, "target": e.target, "length": e.length, "velocity": e.velocity}
            for e in g.edges
        ],
        "inflow_vertices": list(g.inflow_vertices),
        "outflow_vertices": list(g.outflow_vertices),
    }


def dumps_graph(g: MetricGraph) -> str:
    return json.dumps(graph_to_spec(g), indent=2, sort_keys=True) + "\n"


def write_graph_file(g: MetricGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_graph(g))


def read_graph_file(path) -> MetricGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return build_graph(json.load(fh))


# ---------------------------------------------------------------------------
# Stock topologies.

def fig1_graph(velocity: float = 1.0) -> MetricGraph:
    """Double-Y graph: two sources feed one inner edge that splits into two
    sinks.  Edge types: e1, e2 inflow; e3 inner; e4, e5 outflow."""
    return build_graph(
        {
            "vertices": ["v1", "v2", "v3", "v4", "v5", "v6"],
            "edges": [
                ("v1", "v3", 1.0, velocity),
                ("v2", "v3", 1.0, velocity),
                ("v3", "v4", 1.0, velocity),
                ("v4", "v5", 1.0, velocity),
                ("v4", "v6", 1.0, velocity),
            ],
            "inflow_vertices": ["v1", "v2"],
            "outflow_vertices": ["v5", "v6"],
        }
    )


def chain_graph(n_edges: int, velocity: float = 1.0, length: float = 1.0) -> MetricGraph:
    """Unrolled chain with ``n_edges`` edges: one inflow, one outflow,
    n_edges - 2 inner edges."""
    if n_edges < 2:
        raise GraphError("chain needs at least 2 edges to be classifiable")
    vertices = [f"v{i}" for i in range(n_edges + 1)]
    edges = [(f"v{i}", f"v{i+1}", length, velocity) for i in range(n_edges)]
    return build_graph(
        {
            "vertices": vertices,
            "edges": edges,
            "inflow_vertices": ["v0"],
            "outflow_vertices": [f"v{n_edges}"],
        }
    )


def training_graphs() -> list[MetricGraph]:
    """The three data-generation topologies: a double-Y plus a 4- and a
    5-edge chain (together 4 inflow, 6 inner, 4 outflow edges)."""
    return [fig1_graph(), chain_graph(4), chain_graph(5)]


def make_layered_graph(
    n_edges: int,
    seed: int = 0,
    n_sources: int = 5,
    n_sinks: int = 5,
    inner_width: int = 8,
    velocity_range: tuple[float, float] = (0.5, 1.5),
) -> MetricGraph:
    """Random layered directed graph with exactly ``n_edges`` edges.

    Sources only emit, sinks only absorb, every inner vertex keeps at least
    one incoming and one outgoing edge, so the classification is total.
    Used for scaling studies and topology property tests.
    """
    rng = np.random.default_rng(seed)
    lo, hi = velocity_range

    n_layers = max(1, n_edges // inner_width - 1)
    slack = 4  # reserved for connectivity bridges
    while True:
        layers = (
            [[f"s{i}" for i in range(n_sources)]]
            + [[f"m{j}_{i}" for i in range(inner_width)] for j in range(n_layers)]
            + [[f"t{i}" for i in range(n_sinks)]]
        )
        base = sum(max(len(layers[j]), len(layers[j + 1])) for j in range(len(layers) - 1))
        if base + slack <= n_edges or n_layers == 1:
            break
        n_layers -= 1
    if base > n_edges:
        raise GraphError(f"cannot build a layered graph with only {n_edges} edges")

    rows = set()
    parent = {v: v for layer in layers for v in layer}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    def add(o, t):
        while True:
            row = (o, t, 1.0, float(rng.uniform(lo, hi)))
            if row not in rows:
                rows.add(row)
                parent[find(o)] = find(t)
                return row

    edges = []
    for j in range(len(layers) - 1):
        cur, nxt = layers[j], layers[j + 1]
        targets = [nxt[i % len(nxt)] for i in range(max(len(cur), len(nxt)))]
        rng.shuffle(targets)
        for i, t in enumerate(targets):
            edges.append(add(cur[i % len(cur)], t))

    # bridge weakly disconnected components within the extra-edge budget
    def bridge():
        for j in range(len(layers) - 1):
            for o in layers[j]:
                for t in layers[j + 1]:
                    if find(o) != find(t):
                        edges.append(add(o, t))
                        return True
        return False

    while len({find(v) for v in parent}) > 1:
        if len(edges) >= n_edges or not bridge():
            raise GraphError(f"cannot connect a layered graph with {n_edges} edges")
    while len(edges) < n_edges:
        j = int(rng.integers(0, len(layers) - 1))
        o = layers[j][int(rng.integers(0, len(layers[j])))]
        t = layers[j + 1][int(rng.integers(0, len(layers[j + 1])))]
        edges.append(add(o, t))

    return build_graph(
        {
            "vertices": [v for layer in layers for v in layer],
            "edges": list(edges),
            "inflow_vertices": layers[0],
            "outflow_vertices": layers[-1],
        }
    )


# ---------------------------------------------------------------------------
# Boundary and initial data attached to a graph.

@dataclass
class BoundaryData:
    """Boundary rate series and per-edge initial profiles.

    Rates are sampled on a uniform grid over [0, T] (one series per exterior
    vertex; inflow rates are mass-per-time sources, outflow rates are velocity
    factors of the absorbing boundary).  Initial profiles live on uniform
    grids over [0, length] per edge, with values in [0, 1].
    """

    horizon: float
    inflow: dict[str, np.ndarray] = field(default_factory=dict)
    outflow: dict[str, np.ndarray] = field(default_factory=dict)
    init: dict[int, np.ndarray] = field(default_factory=dict)

    def validate(self, g: MetricGraph, exclusive: bool = False) -> None:
        for name, table in (("inflow", self.inflow), ("outflow", self.outflow)):
            for v, series in table.items():
                series = np.asarray(series, dtype=float)
                if series.ndim != 1 or series.size < 2:
                    raise GraphError(f"{name} series at {v!r} needs >= 2 samples")
                if np.any(series < 0):
                    raise GraphError(f"{name} series at {v!r} has negative entries")
                if v not in g.exterior_vertices:
                    raise GraphError(f"{name} rate attached to non-exterior vertex {v!r}")
        if exclusive:
            for v in set(self.inflow) & set(self.outflow):
                prod = np.asarray(self.inflow[v]) * np.asarray(self.outflow[v])
                if np.any(prod != 0):
                    raise GraphError(f"vertex {v!r} has overlapping inflow and outflow rates")
        for i, profile in self.init.items():
            profile = np.asarray(profile, dtype=float)
            if profile.ndim != 1 or profile.size < 2:
                raise GraphError(f"init profile on edge {i} needs >= 2 samples")
            if profile.min() < 0 or profile.max() > 1:
                raise GraphError(f"init profile on edge {i} leaves [0, 1]")

    def rate_at(self, table: str, v: str, t) -> np.ndarray:
        """Linear interpolation of a rate series at times ``t`` (0 if absent)."""
        series = getattr(self, table).get(v)
        t = np.asarray(t, dtype=float)
        if series is None:
            return np.zeros_like(t)
        grid = np.linspace(0.0, self.horizon, len(series))
        return np.interp(t, grid, series)

    @staticmethod
    def zero(g: MetricGraph, horizon: float = 1.0, n_samples: int = 101,
             n_init: int = 101) -> "BoundaryData":
        bc = BoundaryData(horizon=horizon)
        for v in g.inflow_vertices:
            bc.inflow[v] = np.zeros(n_samples)
        for v in g.outflow_vertices:
            bc.outflow[v] = np.zeros(n_samples)
        for i in range(g.n_edges):
            bc.init[i] = np.zeros(n_init)
        return bc
