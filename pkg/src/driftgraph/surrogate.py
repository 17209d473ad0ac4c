"""Edge solution operators behind one interface.

A surrogate turns a conditioning tuple (origin series, target series, initial
profile, velocity) into density and flux evaluations anywhere on the edge,
plus directional derivatives with respect to individual sensor entries.  Two
backends exist: an operator network (branch/trunk inner product with a
gated-encoder branch and a Fourier-feature trunk, all derivatives propagated
in closed form by forward mode) and an exact single-edge finite-volume solve
whose tangents come from the linearized marching scheme.

Model archives are directories holding a canonical JSON manifest plus one raw
little-endian float32 binary per weight tensor; this is the only contract
between external trainers and this engine.
"""

from __future__ import annotations

import hashlib
import pathlib
from dataclasses import dataclass, field

import numpy as np

from . import formats, kernels
from .fvm import _interp_tx, _piecewise_linear_cumint, nonlinearity, nonlinearity_prime
from .graphs import EDGE_TYPES

ARCHIVE_FORMAT = "deeponet-archive"
ARCHIVE_VERSION = 1


@dataclass
class SensorInput:
    """Per-edge conditioning tuple.

    The edge type fixes the endpoint semantics: inflow edges carry a Robin
    rate at the origin (J(0) = u_origin (1 - rho)) and a flux value at the
    target; inner edges carry flux values at both ends; outflow edges carry a
    flux value at the origin and a Robin rate at the target
    (J(L) = u_target rho).
    """

    u_origin: np.ndarray
    u_target: np.ndarray
    u_init: np.ndarray
    nu: float
    edge_type: str
    length: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        if self.edge_type not in EDGE_TYPES:
            raise ValueError(f"unknown edge type {self.edge_type!r}")
        self.u_origin = np.asarray(self.u_origin, dtype=float)
        self.u_target = np.asarray(self.u_target, dtype=float)
        self.u_init = np.asarray(self.u_init, dtype=float)

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.u_origin, self.u_target, self.u_init, [self.nu]))

    def slot_range(self, slot: str) -> slice:
        no, nt, ni = len(self.u_origin), len(self.u_target), len(self.u_init)
        return {
            "origin": slice(0, no),
            "target": slice(no, no + nt),
            "init": slice(no + nt, no + nt + ni),
            "nu": slice(no + nt + ni, no + nt + ni + 1),
        }[slot]


@dataclass
class Direction:
    """Perturbation of one sensor slot: a vector for the series slots, a
    scalar for the velocity.  Reusable across iterations; backends may cache
    per-direction precomputations on ``_cache``."""

    slot: str
    vector: np.ndarray | float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def embed(self, s: SensorInput) -> tuple[np.ndarray, float]:
        """(full sensor-vector perturbation, velocity perturbation)."""
        du = np.zeros(len(s.u_origin) + len(s.u_target) + len(s.u_init) + 1)
        if self.slot == "nu":
            du[-1] = float(self.vector)
            return du, float(self.vector)
        du[s.slot_range(self.slot)] = np.asarray(self.vector, dtype=float)
        return du, 0.0


# ---------------------------------------------------------------------------
# Operator-network model.

def _glorot(rng, shape):
    scale = np.sqrt(2.0 / (shape[0] + shape[1]))
    return (rng.standard_normal(shape) * scale).astype(np.float32)


@dataclass
class DeepOnetModel:
    """Branch/trunk weights plus the metadata inference needs.

    Branch: gated multilayer perceptron on the sensor vector (two tanh
    encoders U, V; every hidden activation Z is blended as
    H = (1 - Z) U + Z V).  Trunk: random Fourier features of (t, x) followed
    by a plain tanh perceptron.  Output: inner product of both p-vectors.
    Weights stay float32 (the archive's dtype); arithmetic runs in float64.
    """

    n_sensor: int
    width: int
    depth: int
    p: int
    n_freq: int
    eps: float
    edge_type: str
    horizon: float = 1.0
    length: float = 1.0
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self._w64 = {k: np.asarray(v, dtype=np.float64) for k, v in self.weights.items()}

    def tensor_names(self) -> list[str]:
        names = ["branch.enc_u.W", "branch.enc_u.b", "branch.enc_v.W", "branch.enc_v.b"]
        for k in range(1, self.depth + 1):
            names += [f"branch.hidden{k}.W", f"branch.hidden{k}.b"]
        names += ["branch.out.W", "branch.out.b", "trunk.frequencies"]
        for k in range(1, self.depth + 1):
            names += [f"trunk.hidden{k}.W", f"trunk.hidden{k}.b"]
        names += ["trunk.out.W", "trunk.out.b"]
        return names

    def tensor_shape(self, name: str) -> tuple:
        w, m, p, nf = self.width, self.n_sensor, self.p, self.n_freq
        if name == "trunk.frequencies":
            return (nf, 2)
        part, layer, kind = name.split(".")
        if kind == "b":
            return (p,) if layer == "out" else (w,)
        if layer == "out":
            return (p, w)
        if part == "branch":
            fan_in = m if layer in ("enc_u", "enc_v", "hidden1") else w
        else:
            fan_in = 2 * nf if layer == "hidden1" else w
        return (w, fan_in)

    @staticmethod
    def random(seed, n_sensor, width=32, depth=7, p=None, n_freq=5,
               eps=0.05, edge_type="inner", horizon=1.0, length=1.0,
               frequency_scale=1.0) -> "DeepOnetModel":
        rng = np.random.default_rng(seed)
        model = DeepOnetModel(
            n_sensor=n_sensor, width=width, depth=depth, p=p or width,
            n_freq=n_freq, eps=eps, edge_type=edge_type,
            horizon=horizon, length=length,
            provenance={"initializer": "glorot-normal", "seed": int(seed)},
        )
        weights = {}
        for name in model.tensor_names():
            shape = model.tensor_shape(name)
            if name == "trunk.frequencies":
                weights[name] = (rng.standard_normal(shape) * frequency_scale).astype(np.float32)
            elif name.endswith(".b"):
                weights[name] = np.zeros(shape, dtype=np.float32)
            else:
                weights[name] = _glorot(rng, shape)
        model.weights = weights
        model.__post_init__()
        return model

    # -- branch ------------------------------------------------------------
    def branch(self, u: np.ndarray, du: np.ndarray | None = None):
        """Branch output (p,) and, when ``du`` (nd, n_sensor) is given, its
        directional derivatives (nd, p)."""
        w = self._w64
        u = np.asarray(u, dtype=float)
        U = np.tanh(w["branch.enc_u.W"] @ u + w["branch.enc_u.b"])
        V = np.tanh(w["branch.enc_v.W"] @ u + w["branch.enc_v.b"])
        tangent = du is not None
        if tangent:
            du = np.atleast_2d(np.asarray(du, dtype=float))
            dU = (1 - U**2) * (du @ w["branch.enc_u.W"].T)
            dV = (1 - V**2) * (du @ w["branch.enc_v.W"].T)
        H, dH = u, (du if tangent else None)
        for k in range(1, self.depth + 1):
            W, b = w[f"branch.hidden{k}.W"], w[f"branch.hidden{k}.b"]
            Z = np.tanh(W @ H + b)
            if tangent:
                dZ = (1 - Z**2) * (dH @ W.T)
                dH = (1 - Z) * dU + Z * dV + dZ * (V - U)
            H = (1 - Z) * U + Z * V
        out = w["branch.out.W"] @ H + w["branch.out.b"]
        if tangent:
            return out, dH @ w["branch.out.W"].T
        return out, None

    # -- trunk ---------------------------------------------------------------
    def trunk(self, ts, xs, direction=None, order=0):
        """Trunk basis at query points (broadcast ts, xs to a common batch):
        returns [T0] plus directional derivatives [T1, T2] up to ``order``
        along ``direction`` = (wt, wx)."""
        w = self._w64
        ts, xs = np.broadcast_arrays(np.asarray(ts, dtype=float), np.asarray(xs, dtype=float))
        y = np.stack((np.ravel(ts), np.ravel(xs)), axis=1)
        freq = w["trunk.frequencies"]
        a = 2.0 * np.pi * (y @ freq.T)
        sin, cos = np.sin(a), np.cos(a)
        v = [np.concatenate((sin, cos), axis=1)]
        if order >= 1:
            wt, wx = direction
            da = 2.0 * np.pi * (freq @ np.array([wt, wx], dtype=float))
            v.append(np.concatenate((cos * da, -sin * da), axis=1))
        if order >= 2:
            v.append(np.concatenate((-sin * da**2, -cos * da**2), axis=1))
        for k in range(1, self.depth + 1):
            W, b = w[f"trunk.hidden{k}.W"], w[f"trunk.hidden{k}.b"]
            z = [t @ W.T for t in v]
            z[0] += b
            t0 = np.tanh(z[0])
            g = 1 - t0**2
            out = [t0]
            if order >= 1:
                out.append(g * z[1])
            if order >= 2:
                out.append(g * z[2] - 2 * t0 * g * z[1] ** 2)
            v = out
        W, b = w["trunk.out.W"], w["trunk.out.b"]
        v = [t @ W.T for t in v]
        v[0] += b
        return [t.reshape(ts.shape + (self.p,)) for t in v]


class DeepOnetSurrogate:
    """Inference backend around one loaded model."""

    def __init__(self, model: DeepOnetModel):
        self.model = model
        self.eps = model.eps

    def solve(self, s: SensorInput, directions=()):
        u = s.to_vector()
        if len(u) != self.model.n_sensor:
            raise ValueError(
                f"sensor vector has {len(u)} entries, model expects {self.model.n_sensor}"
            )
        du = np.array([d.embed(s)[0] for d in directions]) if directions else None
        b, dbs = self.model.branch(u, du)
        dnus = np.array([d.embed(s)[1] for d in directions]) if directions else None
        return _DeepOnetSolution(self.model, s, b, dbs, dnus)


class _DeepOnetSolution:
    def __init__(self, model, s, b, dbs, dnus):
        self.model = model
        self.s = s
        self.b = b
        self.dbs = dbs
        self.dnus = dnus
        self._trunk_cache = {}

    def rho(self, t, x):
        (t0,) = self.model.trunk(t, x, order=0)
        return t0 @ self.b

    def d_rho(self, q, t, x):
        (t0,) = self.model.trunk(t, x, order=0)
        return t0 @ self.dbs[q]

    def rho_dx(self, t, x):
        t0, t1 = self.model.trunk(t, x, direction=(0.0, 1.0), order=1)
        return t1 @ self.b

    def rho_dt(self, t, x):
        t0, t1 = self.model.trunk(t, x, direction=(1.0, 0.0), order=1)
        return t1 @ self.b

    def rho_dxx(self, t, x):
        t0, t1, t2 = self.model.trunk(t, x, direction=(0.0, 1.0), order=2)
        return t2 @ self.b

    def flux(self, t, x):
        t0, t1 = self.model.trunk(t, x, direction=(0.0, 1.0), order=1)
        rho = t0 @ self.b
        return -self.model.eps * (t1 @ self.b) + self.s.nu * nonlinearity(rho)

    def d_flux(self, q, t, x):
        t0, t1 = self.model.trunk(t, x, direction=(0.0, 1.0), order=1)
        rho = t0 @ self.b
        drho = t0 @ self.dbs[q]
        out = -self.model.eps * (t1 @ self.dbs[q]) \
            + self.s.nu * nonlinearity_prime(rho) * drho
        if self.dnus is not None and self.dnus[q]:
            out = out + self.dnus[q] * nonlinearity(rho)
        return out

    def pde_residual(self, t, x):
        """Pointwise strong-form residual rho_t - eps rho_xx + nu f'(rho) rho_x."""
        t0, tx, txx = self.model.trunk(t, x, direction=(0.0, 1.0), order=2)
        (_, tt) = self.model.trunk(t, x, direction=(1.0, 0.0), order=1)
        rho = t0 @ self.b
        return (
            tt @ self.b
            - self.model.eps * (txx @ self.b)
            + self.s.nu * nonlinearity_prime(rho) * (tx @ self.b)
        )

    def _end_trunk(self, end, times):
        """Cached (T0, T1x) at one endpoint for a time batch."""
        times = np.asarray(times, dtype=float)
        key = (end, times.tobytes())
        if self._trunk_cache.get("key") != key:
            x = 0.0 if end == "o" else self.s.length
            t0, t1 = self.model.trunk(times, x, direction=(0.0, 1.0), order=1)
            self._trunk_cache = {"key": key, "t0": t0, "t1": t1}
        return self._trunk_cache["t0"], self._trunk_cache["t1"]

    def rho_end(self, end, times):
        t0, _ = self._end_trunk(end, times)
        return t0 @ self.b

    def flux_end(self, end, times):
        t0, t1 = self._end_trunk(end, times)
        rho = t0 @ self.b
        return -self.model.eps * (t1 @ self.b) + self.s.nu * nonlinearity(rho)

    def d_rho_end(self, q, end, times):
        return self.d_rho_end_all(end, times)[q]

    def d_rho_end_all(self, end, times):
        t0, _ = self._end_trunk(end, times)
        return self.dbs @ t0.T

    def d_flux_end(self, q, end, times):
        return self.d_flux_end_all(end, times)[q]

    def _d_flux_from_trunk(self, t0, t1):
        rho = t0 @ self.b
        out = -self.model.eps * (self.dbs @ t1.T) \
            + self.s.nu * nonlinearity_prime(rho)[None, :] * (self.dbs @ t0.T)
        if self.dnus is not None and np.any(self.dnus):
            out = out + self.dnus[:, None] * nonlinearity(rho)[None, :]
        return out

    def d_flux_end_all(self, end, times):
        t0, t1 = self._end_trunk(end, times)
        return self._d_flux_from_trunk(t0, t1)

    def rho_at(self, x, times):
        return self.rho(np.asarray(times, dtype=float), x)

    def d_rho_at_all(self, x, times):
        (t0,) = self.model.trunk(np.asarray(times, dtype=float), x, order=0)
        return self.dbs @ t0.T

    def flux_at(self, x, times):
        return self.flux(np.asarray(times, dtype=float), x)

    def d_flux_at_all(self, x, times):
        t0, t1 = self.model.trunk(np.asarray(times, dtype=float), x,
                                  direction=(0.0, 1.0), order=1)
        return self._d_flux_from_trunk(t0, t1)


# ---------------------------------------------------------------------------
# Exact finite-volume backend.

def _interp_rows(grid, table, tq):
    """Linear interpolation of row-stacked series on a UNIFORM grid:
    table (..., len(grid)) read at clamped query times tq (T,) -> (..., T)."""
    tq = np.asarray(tq, dtype=float)
    n = len(grid)
    if n == 1:
        return np.repeat(table[..., :1], len(tq), axis=-1)
    dg = (grid[-1] - grid[0]) / (n - 1)
    pos = (tq - grid[0]) / dg
    j = np.minimum(np.maximum(pos.astype(int), 0), n - 2)
    w = np.minimum(np.maximum(pos - j, 0.0), 1.0)
    return (1.0 - w) * table[..., j] + w * table[..., j + 1]


def _project_profile(profile, length, n):
    """Exact cell averages of the piecewise-linear interpolant on a single
    edge with n + 1 cells."""
    profile = np.asarray(profile, dtype=float)
    return _projection_matrix(length, n, profile.size) @ profile


_PROJ_CACHE: dict[tuple, np.ndarray] = {}


def _projection_matrix(length, n, m):
    """Linear map from m uniform profile samples to the n + 1 exact cell
    averages (cached; the projection is linear in the samples)."""
    key = (round(float(length), 12), int(n), int(m))
    if key not in _PROJ_CACHE:
        xs = np.linspace(0.0, length, m)
        h = length / (n + 1)
        bounds = np.arange(n + 2) * h
        bounds[-1] = length
        cols = []
        for k in range(m):
            hat = np.zeros(m)
            hat[k] = 1.0
            cols.append(np.diff(_piecewise_linear_cumint(xs, hat, bounds)) / h)
        _PROJ_CACHE[key] = np.stack(cols, axis=1)
    return _PROJ_CACHE[key]


class OracleSurrogate:
    """Single-edge finite-volume solve behind the surrogate interface.

    Boundary conditions are decoded from the edge type exactly as the loss
    definitions require; tangents come from the linearized scheme, so
    directional derivatives are exact for the discrete map.
    """

    def __init__(self, eps: float = 0.05, n: int = 64, alpha: float = 1.0):
        self.eps = eps
        self.n = n
        self.alpha = alpha

    def _kinds(self, edge_type):
        return {
            "inflow": (kernels.ROBIN, kernels.FLUX),
            "inner": (kernels.FLUX, kernels.FLUX),
            "outflow": (kernels.FLUX, kernels.ROBIN),
        }[edge_type]

    def solve(self, s: SensorInput, directions=(), init_values=None):
        n = self.n
        h = s.length / (n + 1)
        n_t = max(1, int(np.ceil(s.horizon / h - 1e-12)))
        tau = s.horizon / n_t
        t_flux = tau * np.arange(n_t)
        t_o = np.linspace(0.0, s.horizon, len(s.u_origin))
        t_t = np.linspace(0.0, s.horizon, len(s.u_target))
        oseries = np.interp(t_flux, t_o, s.u_origin)
        tseries = np.interp(t_flux, t_t, s.u_target)
        rho0 = np.asarray(init_values, dtype=float) if init_values is not None \
            else _project_profile(s.u_init, s.length, n)
        if rho0.shape != (n + 1,):
            raise ValueError(f"initial state needs {n + 1} cell values, got {rho0.shape}")
        okind, tkind = self._kinds(s.edge_type)

        nd = len(directions)
        d_rho0 = d_os = d_ts = d_nu = None
        if nd:
            d_rho0 = np.zeros((nd, n + 1))
            d_os = np.zeros((nd, n_t))
            d_ts = np.zeros((nd, n_t))
            d_nu = np.zeros(nd)
            key = (n, n_t, round(s.horizon, 12), round(s.length, 12))
            init_rows = []
            for q, d in enumerate(directions):
                if d.slot == "origin":
                    if key not in d._cache:
                        d._cache[key] = np.interp(t_flux, t_o, np.asarray(d.vector, dtype=float))
                    d_os[q] = d._cache[key]
                elif d.slot == "target":
                    if key not in d._cache:
                        d._cache[key] = np.interp(t_flux, t_t, np.asarray(d.vector, dtype=float))
                    d_ts[q] = d._cache[key]
                elif d.slot == "init":
                    init_rows.append(q)
                elif d.slot == "nu":
                    d_nu[q] = float(d.vector)
                else:
                    raise ValueError(f"unknown direction slot {d.slot!r}")
            if init_rows:
                mat = np.stack([np.asarray(directions[q].vector, dtype=float)
                                for q in init_rows])
                proj = _projection_matrix(s.length, n, mat.shape[1])
                d_rho0[init_rows] = mat @ proj.T

        traj, dtraj = kernels.edge_solve(
            h, tau, self.eps, self.alpha, s.nu, n_t, rho0,
            okind, oseries, tkind, tseries, d_rho0, d_os, d_ts, d_nu,
        )
        return _OracleSolution(self, s, h, tau, n_t, traj, dtraj, d_nu)


class _OracleSolution:
    def __init__(self, backend, s, h, tau, n_t, traj, dtraj, d_nu):
        self.backend = backend
        self.s = s
        self.h = h
        self.tau = tau
        self.n_t = n_t
        self.traj = traj
        self.dtraj = dtraj
        self.d_nu = d_nu
        n1 = traj.shape[1]
        self.times = tau * np.arange(n_t + 1)
        self.nodes = np.concatenate(([0.0], (np.arange(n1) + 0.5) * h, [s.length]))
        self.flux_times = self.times[:-1]
        self.flux_nodes = np.concatenate(([0.0], (np.arange(n1 - 1) + 1) * h, [s.length]))
        self._flux_cache = None
        self._dflux_cache = {}

    def _flux_table(self):
        if self._flux_cache is None:
            eps, alpha, nu, h = self.backend.eps, self.backend.alpha, self.s.nu, self.h
            S = self.traj
            old, new = S[:-1], S[1:]
            conv = 0.5 * nu * (nonlinearity(old[:, :-1]) + nonlinearity(old[:, 1:])) \
                - 0.5 * alpha * (old[:, 1:] - old[:, :-1])
            jf = -eps * (new[:, 1:] - new[:, :-1]) / h + conv
            dsdt = (new - old) / self.tau
            jo = jf[:, :1] + h * dsdt[:, :1]
            jt = jf[:, -1:] - h * dsdt[:, -1:]
            self._flux_cache = np.hstack((jo, jf, jt))
        return self._flux_cache

    def _d_interface_flux(self, c):
        """Tangent interface flux between cells c and c + 1, all directions:
        (nd, n_t)."""
        eps, alpha, nu = self.backend.eps, self.backend.alpha, self.s.nu
        sl, sr = self.traj[:-1, c], self.traj[:-1, c + 1]
        dl, dr = self.dtraj[:, :-1, c], self.dtraj[:, :-1, c + 1]
        dnl, dnr = self.dtraj[:, 1:, c], self.dtraj[:, 1:, c + 1]
        dconv = 0.5 * nu * (nonlinearity_prime(sl) * dl + nonlinearity_prime(sr) * dr) \
            - 0.5 * alpha * (dr - dl)
        dconv += 0.5 * self.d_nu[:, None] * (nonlinearity(sl) + nonlinearity(sr))
        return -eps * (dnr - dnl) / self.h + dconv

    def _d_flux_column(self, m):
        """Tangent flux at flux-node column m (0 = origin vertex, n = target
        vertex, otherwise interface m - 1): (nd, n_t)."""
        if m not in self._dflux_cache:
            n1 = self.traj.shape[1]
            if m == 0:
                dd = (self.dtraj[:, 1:, 0] - self.dtraj[:, :-1, 0]) / self.tau
                col = self._d_interface_flux(0) + self.h * dd
            elif m == n1:
                dd = (self.dtraj[:, 1:, -1] - self.dtraj[:, :-1, -1]) / self.tau
                col = self._d_interface_flux(n1 - 2) - self.h * dd
            else:
                col = self._d_interface_flux(m - 1)
            self._dflux_cache[m] = col
        return self._dflux_cache[m]

    @staticmethod
    def _pad(table):
        return np.hstack((table[:, :1], table, table[:, -1:]))

    def rho(self, t, x):
        return _interp_tx(self.times, t, x, self.nodes, self._pad(self.traj))

    def _node_bracket(self, nodes, x):
        j = int(np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2))
        w = (x - nodes[j]) / (nodes[j + 1] - nodes[j])
        return j, float(np.clip(w, 0.0, 1.0))

    def rho_at(self, x, times):
        """Primal density at a fixed position: (T,)."""
        j, w = self._node_bracket(self.nodes, float(x))
        n1 = self.traj.shape[1]
        cl, cr = min(max(j - 1, 0), n1 - 1), min(max(j, 0), n1 - 1)
        series = (1.0 - w) * self.traj[:, cl] + w * self.traj[:, cr]
        return _interp_rows(self.times, series, times)

    def d_rho_at_all(self, x, times):
        """Tangent density at a fixed position, all directions: (nd, T)."""
        j, w = self._node_bracket(self.nodes, float(x))
        n1 = self.traj.shape[1]
        cl, cr = min(max(j - 1, 0), n1 - 1), min(max(j, 0), n1 - 1)
        series = (1.0 - w) * self.dtraj[:, :, cl] + w * self.dtraj[:, :, cr]
        return _interp_rows(self.times, series, times)

    def d_rho(self, q, t, x):
        return _interp_tx(self.times, t, x, self.nodes, self._pad(self.dtraj[q]))

    def flux(self, t, x):
        return _interp_tx(self.flux_times, t, x, self.flux_nodes, self._flux_table())

    def flux_at(self, x, times):
        """Primal flux at a fixed position: (T,)."""
        j, w = self._node_bracket(self.flux_nodes, float(x))
        table = self._flux_table()
        series = (1.0 - w) * table[:, j] + w * table[:, j + 1]
        return _interp_rows(self.flux_times, series, times)

    def d_flux_at_all(self, x, times):
        """Tangent flux at a fixed position, all directions: (nd, T)."""
        j, w = self._node_bracket(self.flux_nodes, float(x))
        series = (1.0 - w) * self._d_flux_column(j) + w * self._d_flux_column(j + 1)
        return _interp_rows(self.flux_times, series, times)

    def d_flux(self, q, t, x):
        t_b, x_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        scalar = t_b.ndim == 0
        out = np.empty(np.atleast_1d(t_b).shape)
        flat_t = np.atleast_1d(t_b).ravel()
        flat_x = np.atleast_1d(x_b).ravel()
        for xi in np.unique(flat_x):
            m = flat_x == xi
            out.ravel()[m] = self.d_flux_at_all(xi, flat_t[m])[q]
        return float(out.ravel()[0]) if scalar else out

    def pde_residual(self, t, x):
        """Centered-difference residual of the interpolated field; a coarse
        diagnostic only (the network backend computes this analytically)."""
        dt, dx = self.tau, self.h
        t = np.clip(np.asarray(t, dtype=float), dt, self.s.horizon - dt)
        x = np.clip(np.asarray(x, dtype=float), dx, self.s.length - dx)
        rho_t = (self.rho(t + dt, x) - self.rho(t - dt, x)) / (2 * dt)
        rho_x = (self.rho(t, x + dx) - self.rho(t, x - dx)) / (2 * dx)
        rho_xx = (self.rho(t, x + dx) - 2 * self.rho(t, x) + self.rho(t, x - dx)) / dx**2
        rho = self.rho(t, x)
        return rho_t - self.backend.eps * rho_xx \
            + self.s.nu * nonlinearity_prime(rho) * rho_x

    def rho_end(self, end, times):
        col = 0 if end == "o" else -1
        return _interp_rows(self.times, self.traj[:, col], times)

    def d_rho_end(self, q, end, times):
        return self.d_rho_end_all(end, times)[q]

    def d_rho_end_all(self, end, times):
        col = 0 if end == "o" else -1
        return _interp_rows(self.times, self.dtraj[:, :, col], times)

    def flux_end(self, end, times):
        col = 0 if end == "o" else -1
        return _interp_rows(self.flux_times, self._flux_table()[:, col], times)

    def d_flux_end(self, q, end, times):
        return self.d_flux_end_all(end, times)[q]

    def d_flux_end_all(self, end, times):
        col = 0 if end == "o" else self.traj.shape[1]
        return _interp_rows(self.flux_times, self._d_flux_column(col), times)


class SurrogateSet:
    """Edge-type dispatch over one or three backends; forbids mixing models
    trained at different diffusion constants."""

    def __init__(self, backends):
        if hasattr(backends, "solve"):
            backends = {t: backends for t in EDGE_TYPES}
        self.backends = dict(backends)
        eps_values = {round(b.eps, 12) for b in self.backends.values()}
        if len(eps_values) > 1:
            raise ValueError(f"surrogates disagree on eps: {sorted(eps_values)}")
        self.eps = next(iter(self.backends.values())).eps

    def for_type(self, edge_type: str):
        try:
            return self.backends[edge_type]
        except KeyError:
            raise ValueError(f"no surrogate loaded for edge type {edge_type!r}") from None

    def solve(self, s: SensorInput, directions=(), **kw):
        return self.for_type(s.edge_type).solve(s, directions, **kw)


# ---------------------------------------------------------------------------
# Module-level convenience wrappers (one-shot evaluations).

def evaluate(backend, s: SensorInput, t, x):
    """Density at (t, x) under the given backend."""
    _check_domain(s, t, x)
    return backend.solve(s).rho(t, x)


def flux(backend, s: SensorInput, t, x):
    """Flux -eps rho_x + nu f(rho) at (t, x)."""
    _check_domain(s, t, x)
    return backend.solve(s).flux(t, x)


def _check_domain(s, t, x):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t < -1e-12) or np.any(t > s.horizon + 1e-12):
        raise ValueError(f"t outside [0, {s.horizon}]")
    if np.any(x < -1e-12) or np.any(x > s.length + 1e-12):
        raise ValueError(f"x outside [0, {s.length}]")


def edge_loss(backend, s: SensorInput, pde_points, init_points, bc_times):
    """Mean squared residuals (L_pde, L_init, L_edge) of a backend on one
    conditioning tuple.

    pde_points: (B, 2) array of (t, x); init_points: (B1,) positions;
    bc_times: (B2,) times.  The edge term follows the edge type: Robin
    residual u (1 - rho) - J at an inflow origin, u rho - J at an outflow
    target, u - J at prescribed-flux endpoints.
    """
    sol = backend.solve(s)
    pde_points = np.asarray(pde_points, dtype=float)
    res = sol.pde_residual(pde_points[:, 0], pde_points[:, 1])
    l_pde = float(np.mean(res**2))

    init_points = np.asarray(init_points, dtype=float)
    target = np.interp(init_points, np.linspace(0.0, s.length, len(s.u_init)), s.u_init)
    l_init = float(np.mean((sol.rho(np.zeros_like(init_points), init_points) - target) ** 2))

    bc_times = np.asarray(bc_times, dtype=float)
    uo = np.interp(bc_times, np.linspace(0.0, s.horizon, len(s.u_origin)), s.u_origin)
    ut = np.interp(bc_times, np.linspace(0.0, s.horizon, len(s.u_target)), s.u_target)
    j0 = sol.flux_end("o", bc_times)
    j1 = sol.flux_end("t", bc_times)
    if s.edge_type == "inflow":
        r0 = uo * (1.0 - sol.rho_end("o", bc_times)) - j0
        r1 = ut - j1
    elif s.edge_type == "inner":
        r0 = uo - j0
        r1 = ut - j1
    else:
        r0 = uo - j0
        r1 = ut * sol.rho_end("t", bc_times) - j1
    l_edge = float(np.mean(r0**2 + r1**2))
    return l_pde, l_init, l_edge


# ---------------------------------------------------------------------------
# Model archives.

def save_model(model: DeepOnetModel, path) -> None:
    path = pathlib.Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = []
    for name in model.tensor_names():
        arr = np.ascontiguousarray(model.weights[name], dtype="<f4")
        expected = model.tensor_shape(name)
        if arr.shape != expected:
            raise ValueError(f"tensor {name}: shape {arr.shape} != expected {expected}")
        fname = name.replace(".", "_") + ".bin"
        blob = arr.tobytes()
        (path / fname).write_bytes(blob)
        tensors.append({
            "name": name,
            "file": fname,
            "shape": list(arr.shape),
            "dtype": "float32",
            "sha256": hashlib.sha256(blob).hexdigest(),
        })
    manifest = {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "edge_type": model.edge_type,
        "eps": model.eps,
        "arch": {
            "n_sensor": model.n_sensor,
            "width": model.width,
            "depth": model.depth,
            "p": model.p,
            "n_frequencies": model.n_freq,
            "activation": "tanh",
            "branch": "gated-mlp",
            "trunk": "fourier-mlp",
            "input_order": ["u_origin", "u_target", "u_init", "nu"],
            "normalization": "none",
        },
        "domain": {"horizon": model.horizon, "length": model.length},
        "provenance": model.provenance,
        "tensors": tensors,
    }
    formats.write_json(path / "manifest.json", manifest)


def load_model(path) -> DeepOnetModel:
    path = pathlib.Path(path)
    manifest = formats.read_json(path / "manifest.json")
    if manifest.get("format") != ARCHIVE_FORMAT:
        raise formats.FormatError(f"{path}: not a model archive")
    if manifest.get("version") != ARCHIVE_VERSION:
        raise formats.FormatError(f"{path}: unsupported archive version {manifest.get('version')}")
    arch = manifest["arch"]
    model = DeepOnetModel(
        n_sensor=int(arch["n_sensor"]),
        width=int(arch["width"]),
        depth=int(arch["depth"]),
        p=int(arch["p"]),
        n_freq=int(arch["n_frequencies"]),
        eps=float(manifest["eps"]),
        edge_type=manifest["edge_type"],
        horizon=float(manifest["domain"]["horizon"]),
        length=float(manifest["domain"]["length"]),
        provenance=manifest.get("provenance", {}),
    )
    weights = {}
    for spec in manifest["tensors"]:
        blob = (path / spec["file"]).read_bytes()
        if hashlib.sha256(blob).hexdigest() != spec["sha256"]:
            raise formats.FormatError(f"{path}: checksum mismatch for {spec['name']!r}")
        arr = np.frombuffer(blob, dtype="<f4").reshape(spec["shape"]).copy()
        expected = model.tensor_shape(spec["name"])
        if tuple(arr.shape) != expected:
            raise formats.FormatError(
                f"{path}: tensor {spec['name']!r} has shape {arr.shape}, expected {expected}"
            )
        weights[spec["name"]] = arr
    missing = set(model.tensor_names()) - set(weights)
    if missing:
        raise formats.FormatError(f"{path}: missing tensors {sorted(missing)}")
    model.weights = weights
    model.__post_init__()
    return model


def load_surrogate_set(path) -> SurrogateSet:
    """A directory with inflow/ inner/ outflow/ model archives becomes a full
    surrogate set."""
    path = pathlib.Path(path)
    backends = {}
    for etype in EDGE_TYPES:
        sub = path / etype
        if not (sub / "manifest.json").exists():
            raise formats.FormatError(f"{path}: missing {etype} model archive")
        backends[etype] = DeepOnetSurrogate(load_model(sub))
    return SurrogateSet(backends)
