"""Command-line pipeline driver.

Subcommands: simulate, generate, couple, invert, errors, defaults (plus the
auxiliary edge-loss hook used for cross-implementation checks).  Every
command resolves its configuration from defaults plus an optional TOML file,
writes the resolved copy next to its outputs, and exits nonzero when a
declared invariant fails.  DRIFTGRAPH_THREADS controls worker-process counts
for the embarrassingly parallel commands.
"""

from __future__ import annotations

import argparse
import json
import os
import pathlib
import sys

import numpy as np

from . import config as cfgmod
from . import formats
from .fvm import Discretization, simulate as fvm_simulate
from .gpdata import (SensorGrids, extract_sensors, generate_dataset, load_dataset,
                     make_training_instance, smooth_initial)
from .graphs import BoundaryData, GraphError, chain_graph, fig1_graph, make_layered_graph, \
    read_graph_file, training_graphs, write_graph_file
from .coupling import CouplingConfig, TraceParameterization, solve_graph
from .inverse import InverseConfig, error_report, identify, synthesize_measurements
from .optim import AdamConfig
from .surrogate import (DeepOnetSurrogate, OracleSurrogate, SensorInput, SurrogateSet,
                        edge_loss, load_model, load_surrogate_set)


class CliError(RuntimeError):
    pass


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("DRIFTGRAPH_THREADS", "1")))
    except ValueError:
        return 1


def resolve_graph(cfg, path_override=None):
    path = path_override or cfg["graph"]["file"]
    if path:
        return read_graph_file(path)
    name = cfg["graph"]["builtin"]
    if name == "fig1":
        return fig1_graph()
    if name.startswith("chain"):
        return chain_graph(int(name[len("chain"):]))
    if name.startswith("layered:"):
        return make_layered_graph(int(name.split(":", 1)[1]), seed=cfg["run"]["seed"])
    raise CliError(f"unknown builtin graph {name!r}")


def build_instance(g, cfg):
    """Random instance per the [gp] section; seed comes from [run]."""
    gp = cfg["gp"]
    s = cfg["sensors"]
    grids = SensorGrids(n_origin=s["n_origin"], n_target=s["n_target"],
                        n_init=s["n_init"], horizon=cfg["discretization"]["horizon"])
    vr = tuple(gp["velocity_range"]) if gp["resample_velocities"] else None
    g, bc = make_training_instance(
        g, cfg["run"]["seed"], profile=gp["profile"], grids=grids,
        rate_amplitude=gp["rate_amplitude"],
        rate_cap=gp["rate_cap"] or None,
        velocity_range=vr,
    )
    return g, bc, grids


def build_discretization(g, cfg):
    d = cfg["discretization"]
    return Discretization.create(
        g, n=d["n"], horizon=d["horizon"], eps=d["eps"], alpha=d["alpha"],
        tau=d["tau"] or None,
    )


def build_surrogates(cfg) -> SurrogateSet:
    s = cfg["surrogate"]
    kind = s["kind"]
    if kind == "oracle":
        return SurrogateSet(OracleSurrogate(
            eps=cfg["discretization"]["eps"], n=s["n_oracle"],
            alpha=cfg["discretization"]["alpha"]))
    if kind == "archive":
        if not s["path"]:
            raise CliError("surrogate.kind = archive needs surrogate.path")
        return load_surrogate_set(s["path"])
    raise CliError(f"unknown surrogate kind {kind!r}")


def _parse_surrogate_flag(cfg, flag: str | None):
    if not flag:
        return
    if flag == "oracle":
        cfg["surrogate"]["kind"] = "oracle"
    elif flag.startswith("archive:"):
        cfg["surrogate"]["kind"] = "archive"
        cfg["surrogate"]["path"] = flag.split(":", 1)[1]
    else:
        raise CliError(f"--surrogate must be 'oracle' or 'archive:PATH', got {flag!r}")


def _out_dir(cfg, override=None) -> pathlib.Path:
    out = pathlib.Path(override or cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _coupling_config(cfg) -> CouplingConfig:
    c = cfg["coupling"]
    horizon = cfg["discretization"]["horizon"]
    s = cfg["sensors"]
    return CouplingConfig(
        n_times=c["n_times"],
        trace=TraceParameterization(n_beta=c["n_beta"], length_scale=c["length_scale"],
                                    horizon=horizon),
        adam=AdamConfig(lr=c["lr"], max_iter=c["iterations"], clip_norm=c["clip_norm"],
                        lr_decay=c["lr_decay"], grad_tol=c["grad_tol"],
                        weight_decay=c["weight_decay"]),
        grids=SensorGrids(n_origin=s["n_origin"], n_target=s["n_target"],
                          n_init=s["n_init"], horizon=horizon),
    )


def _inverse_config(cfg) -> InverseConfig:
    i = cfg["inverse"]
    c = cfg["coupling"]
    horizon = cfg["discretization"]["horizon"]
    s = cfg["sensors"]
    return InverseConfig(
        n_times=c["n_times"],
        trace=TraceParameterization(n_beta=c["n_beta"], length_scale=c["length_scale"],
                                    horizon=horizon),
        init_n_beta=i["init_n_beta"],
        init_length_scale=i["init_length_scale"],
        measurement_weight=i["measurement_weight"],
        adam=AdamConfig(lr=i["lr"], max_iter=i["iterations"], clip_norm=i["clip_norm"],
                        lr_decay=i["lr_decay"]),
        grids=SensorGrids(n_origin=s["n_origin"], n_target=s["n_target"],
                          n_init=s["n_init"], horizon=horizon),
    )


def _write_solution_csv(path, g, sol, times, n_x=33):
    """Plot-ready density samples along every edge at the given times."""
    rows = []
    for i in range(g.n_edges):
        xs = np.linspace(0.0, g.edges[i].length, n_x)
        for t in times:
            vals = sol.rho(i, float(t), xs)
            for x, v in zip(xs, np.atleast_1d(vals)):
                rows.append((float(t), f"e{i}", float(x), float(v)))
    formats.write_csv(path, ["time", "edge", "x", "rho"], rows)


def cmd_defaults(args) -> int:
    sys.stdout.write(cfgmod.dump_toml(cfgmod.DEFAULTS))
    return 0


def cmd_simulate(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    g = resolve_graph(cfg, args.graph)
    out = _out_dir(cfg, args.out)
    g, bc, grids = build_instance(g, cfg)
    disc = build_discretization(g, cfg)
    bc = smooth_initial(disc, bc, cfg["gp"]["t_smooth"], grids)
    traj = fvm_simulate(disc, bc)

    mass = traj.mass_series()
    has_rates = any(np.any(v) for v in list(bc.inflow.values()) + list(bc.outflow.values()))
    diagnostics = {
        "mass_initial": float(mass[0]),
        "mass_final": float(mass[-1]),
        "mass_drift": float(np.abs(mass - mass[0]).max()) if not has_rates else None,
        "min": float(traj.states.min()),
        "max": float(traj.states.max()),
        "bound_regime": disc.in_preserving_regime(),
        "ok": True,
    }
    if not has_rates and abs(diagnostics["mass_drift"]) > 1e-12 * max(1.0, abs(mass[0])):
        diagnostics["ok"] = False
    if diagnostics["bound_regime"] and not (
        traj.states.min() >= -1e-10 and traj.states.max() <= 1 + 1e-10
    ):
        diagnostics["ok"] = False

    formats.write_trajectory_csv(out / "trajectory.csv", traj)
    formats.write_trajectory_snapshot(out / "trajectory.snap", traj)
    formats.write_json(out / "diagnostics.json", diagnostics)
    write_graph_file(g, out / "graph.json")
    cfgmod.write_config(out / "config.resolved.toml", cfg)
    print(f"simulate: {disc.n_t} steps, mass {mass[0]:.6g} -> {mass[-1]:.6g}, "
          f"range [{diagnostics['min']:.3g}, {diagnostics['max']:.3g}]")
    return 0 if diagnostics["ok"] else 3


def cmd_generate(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    out = _out_dir(cfg, args.out)
    s = cfg["sensors"]
    grids = SensorGrids(n_origin=s["n_origin"], n_target=s["n_target"],
                        n_init=s["n_init"], horizon=cfg["discretization"]["horizon"])
    manifest = generate_dataset(
        out / "dataset",
        n_instances=cfg["generate"]["n_instances"],
        seed=cfg["run"]["seed"],
        profile=cfg["generate"]["profile"],
        grids=grids,
        n=cfg["discretization"]["n"],
        eps=cfg["discretization"]["eps"],
        alpha=cfg["discretization"]["alpha"],
        t_smooth=cfg["gp"]["t_smooth"],
        velocity_range=tuple(cfg["gp"]["velocity_range"]),
        rate_amplitude=cfg["gp"]["rate_amplitude"],
    )
    cfgmod.write_config(out / "config.resolved.toml", cfg)
    counts = {k: v["count"] for k, v in manifest["records"].items()}
    print(f"generate: dataset at {out / 'dataset'} with records {counts}")
    return 0


def cmd_couple(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    _parse_surrogate_flag(cfg, args.surrogate)
    g = resolve_graph(cfg, args.graph)
    out = _out_dir(cfg, args.out)
    g, bc, grids = build_instance(g, cfg)
    disc = build_discretization(g, cfg)
    bc = smooth_initial(disc, bc, cfg["gp"]["t_smooth"], grids)
    surrogates = build_surrogates(cfg)
    sol = solve_graph(g, bc, surrogates, _coupling_config(cfg))

    report = {
        "final_loss": sol.report.final_loss,
        "iterations": sol.report.iterations,
        "grad_norm": sol.report.grad_norm,
        "converged": sol.report.converged,
        "parameters": sol.params.dim,
        "vertex_residuals": sol.residual_report(),
    }
    if cfg["coupling"]["compute_reference"]:
        ref = fvm_simulate(disc, bc)
        abs_e, rel_e = sol.error_vs(ref)
        report["l2_abs_vs_fvm"] = abs_e
        report["l2_rel_vs_fvm"] = rel_e
    formats.write_json(out / "report.json", report)
    formats.write_csv(out / "loss.csv", ["iteration", "loss"],
                      [(k, v) for k, v in enumerate(sol.report.loss_history)])
    _write_solution_csv(out / "solution.csv", g,  sol,
                        np.linspace(0.0, disc.horizon, 5))
    cfgmod.write_config(out / "config.resolved.toml", cfg)
    msg = f"couple: loss {report['final_loss']:.3e} after {report['iterations']} iterations"
    if "l2_rel_vs_fvm" in report:
        msg += f", rel L2 vs FVM {report['l2_rel_vs_fvm']:.3e}"
    print(msg)
    return 0 if np.isfinite(report["final_loss"]) else 3


def cmd_invert(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    _parse_surrogate_flag(cfg, args.surrogate)
    g = resolve_graph(cfg, args.graph)
    out = _out_dir(cfg, args.out)
    g, bc, grids = build_instance(g, cfg)
    disc = build_discretization(g, cfg)
    bc = smooth_initial(disc, bc, cfg["gp"]["t_smooth"], grids)
    ref = fvm_simulate(disc, bc)
    m = synthesize_measurements(ref, n_meas=cfg["sensors"]["n_meas"],
                                noise=cfg["inverse"]["noise"],
                                seed=cfg["run"]["seed"] + 7919)
    surrogates = build_surrogates(cfg)
    res = identify(g, bc, m, surrogates, _inverse_config(cfg))
    rep = error_report(res, ref, bc.init, grids)

    graph_id = args.graph or cfg["graph"]["builtin"]
    rows = [rep.row(graph_id, cfg["inverse"]["noise"], metric) + [metric]
            for metric in ("abs", "rel")]
    formats.write_csv(out / "errors.csv",
                      ["graph", "noise", "err_init", "err_vel", "l2_solution", "metric"],
                      rows)
    formats.write_csv(out / "velocities.csv", ["edge", "true", "recovered"],
                      [(f"e{i}", float(g.edges[i].velocity), float(res.velocities[i]))
                       for i in range(g.n_edges)])
    init_rows = []
    for i in range(g.n_edges):
        xs = grids.x_init(g.edges[i].length)
        for x, v in zip(xs, res.init_profiles[i]):
            init_rows.append((f"e{i}", float(x), float(v)))
    formats.write_csv(out / "recovered_init.csv", ["edge", "x", "rho0"], init_rows)
    formats.write_json(out / "report.json", {
        "final_loss": res.report.final_loss,
        "iterations": res.report.iterations,
        "err_init_rel": rep.err_init_rel,
        "err_vel_rel": rep.err_vel_rel,
        "err_sol_rel": rep.err_sol_rel,
    })
    cfgmod.write_config(out / "config.resolved.toml", cfg)
    print(f"invert: loss {res.report.final_loss:.3e}, rel errors "
          f"init {rep.err_init_rel:.3e} vel {rep.err_vel_rel:.3e} sol {rep.err_sol_rel:.3e}")
    return 0 if np.isfinite(res.report.final_loss) else 3


def _one_error_run(payload):
    (cfg, graph_flag, noise, seed) = payload
    cfg = json.loads(json.dumps(cfg))
    cfg["run"]["seed"] = seed
    cfg["inverse"]["noise"] = noise
    g = resolve_graph(cfg, graph_flag)
    g, bc, grids = build_instance(g, cfg)
    disc = build_discretization(g, cfg)
    bc = smooth_initial(disc, bc, cfg["gp"]["t_smooth"], grids)
    ref = fvm_simulate(disc, bc)
    m = synthesize_measurements(ref, n_meas=cfg["sensors"]["n_meas"], noise=noise,
                                seed=seed + 7919)
    res = identify(g, bc, m, build_surrogates(cfg), _inverse_config(cfg))
    rep = error_report(res, ref, bc.init, grids)
    return noise, seed, rep


def cmd_errors(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    _parse_surrogate_flag(cfg, args.surrogate)
    out = _out_dir(cfg, args.out)
    noise_levels = cfg["errors"]["noise_levels"]
    n_runs = cfg["errors"]["n_runs"]
    jobs = [(cfg, args.graph, noise, cfg["run"]["seed"] + k)
            for noise in noise_levels for k in range(n_runs)]
    workers = thread_count()
    if workers > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_error_run, jobs))
    else:
        results = [_one_error_run(j) for j in jobs]

    graph_id = args.graph or cfg["graph"]["builtin"]
    rows = []
    for metric in ("abs", "rel"):
        for noise, seed, rep in results:
            rows.append(rep.row(graph_id, noise, metric) + [metric, seed])
    formats.write_csv(out / "errors.csv",
                      ["graph", "noise", "err_init", "err_vel", "l2_solution",
                       "metric", "seed"], rows)

    summary_rows = []
    for metric in ("abs", "rel"):
        for noise in noise_levels:
            sel = [rep for n2, _, rep in results if n2 == noise]
            med = lambda key: float(np.median([getattr(r, key + ("_abs" if metric == "abs" else "_rel")) for r in sel]))
            summary_rows.append([graph_id, noise, med("err_init"), med("err_vel"),
                                 med("err_sol"), metric])
    formats.write_csv(out / "errors_median.csv",
                      ["graph", "noise", "err_init", "err_vel", "l2_solution", "metric"],
                      summary_rows)
    cfgmod.write_config(out / "config.resolved.toml", cfg)
    print(f"errors: {len(results)} runs over noise levels {noise_levels}")
    return 0


def cmd_edge_loss(args) -> int:
    """Auxiliary hook: evaluate the three edge losses on fixture inputs with
    this engine's evaluator (cross-implementation consistency checks)."""
    fixtures = formats.read_json(args.fixtures)
    model = load_model(args.model)
    backend = DeepOnetSurrogate(model)
    results = []
    for fx in fixtures["fixtures"]:
        s = SensorInput(
            u_origin=np.asarray(fx["u_origin"], dtype=float),
            u_target=np.asarray(fx["u_target"], dtype=float),
            u_init=np.asarray(fx["u_init"], dtype=float),
            nu=float(fx["nu"]), edge_type=fx["edge_type"],
        )
        pde_pts = np.asarray(fx["pde_points"], dtype=float)
        l_pde, l_init, l_edge = edge_loss(backend, s, pde_pts,
                                          np.asarray(fx["init_points"], dtype=float),
                                          np.asarray(fx["bc_times"], dtype=float))
        results.append({"l_pde": l_pde, "l_init": l_init, "l_edge": l_edge})
    payload = {"results": results}
    if args.out:
        formats.write_json(args.out, payload)
    else:
        sys.stdout.write(formats.canonical_json(payload))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="driftgraph",
        description="Drift-diffusion on metric graphs: solver, surrogates, coupling, identification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="override [run].seed")
        p.add_argument("--out", default=None, help="override [run].out")
        p.add_argument("--graph", default=None, help="graph spec JSON file")
        p.add_argument("--surrogate", default=None,
                       help="oracle | archive:PATH (overrides [surrogate])")

    for name, fn in (("simulate", cmd_simulate), ("generate", cmd_generate),
                     ("couple", cmd_couple), ("invert", cmd_invert),
                     ("errors", cmd_errors)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("defaults", help="print the resolved default configuration")
    p.set_defaults(fn=cmd_defaults)

    p = sub.add_parser("edge-loss", help="evaluate edge losses on fixtures (consistency hook)")
    p.add_argument("--model", required=True)
    p.add_argument("--fixtures", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_edge_loss)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (GraphError, CliError, cfgmod.ConfigError, formats.FormatError,
            OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
