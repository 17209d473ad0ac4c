"""Compare the compiled edge kernel against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times the hot kernel (single-edge marching with batched tangents) on
representative sizes and one full coupling loss+gradient evaluation on the
7-edge chain, for both backends.
"""

import argparse
import time

import numpy as np

from driftgraph.kernels import FLUX, ROBIN, get_backend


def time_edge_solve(backend, n, n_t, nd, repeats):
    rng = np.random.default_rng(0)
    h = 1.0 / (n + 1)
    rho0 = rng.uniform(0, 1, n + 1)
    os_ = rng.uniform(0, 0.5, n_t)
    ts_ = rng.uniform(0, 0.5, n_t)
    d_rho0 = rng.standard_normal((nd, n + 1)) if nd else None
    d_os = rng.standard_normal((nd, n_t)) if nd else None
    d_ts = rng.standard_normal((nd, n_t)) if nd else None
    d_nu = rng.standard_normal(nd) if nd else None
    args = (h, h, 0.05, 1.0, 0.9, n_t, rho0, ROBIN, os_, FLUX, ts_,
            d_rho0, d_os, d_ts, d_nu)
    backend.edge_solve(*args)  # warm up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        backend.edge_solve(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def time_coupling_iteration(kernel_name, repeats):
    import importlib
    import os as _os

    _os.environ["DRIFTGRAPH_KERNEL"] = kernel_name
    import driftgraph.kernels as K

    importlib.reload(K)
    import driftgraph.surrogate as S

    importlib.reload(S)

    from driftgraph.coupling import AssemblyPlan, coupling_loss_and_grad, init_parameters
    from driftgraph.gpdata import SensorGrids, make_training_instance
    from driftgraph.graphs import chain_graph

    g, bc = make_training_instance(chain_graph(7), seed=3, rate_amplitude=0.8,
                                   velocity_range=(0.5, 1.0))
    grids = SensorGrids()
    surr = S.SurrogateSet(S.OracleSurrogate(eps=0.05, n=64))
    params = init_parameters(g)
    times = np.linspace(0, 1, 64)
    plan = AssemblyPlan(g, params, bc, grids)
    coupling_loss_and_grad(g, params, surr, bc, times, grids, plan)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        coupling_loss_and_grad(g, params, surr, bc, times, grids, plan)
        best = min(best, time.perf_counter() - t0)
    _os.environ.pop("DRIFTGRAPH_KERNEL")
    importlib.reload(K)
    importlib.reload(S)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    backends = {"python": get_backend("python")}
    try:
        backends["compiled"] = get_backend("compiled")
    except ImportError:
        print("compiled kernel not built; showing python only")

    print(f"{'case':<36}" + "".join(f"{name:>14}" for name in backends))
    cases = [("edge n=64 nt=65 tangents=0", 64, 65, 0),
             ("edge n=64 nt=65 tangents=21", 64, 65, 21),
             ("edge n=24 nt=25 tangents=31", 24, 25, 31)]
    for label, n, n_t, nd in cases:
        row = [time_edge_solve(b, n, n_t, nd, args.repeats) for b in backends.values()]
        print(f"{label:<36}" + "".join(f"{1e3 * t:>11.3f} ms" for t in row))

    row = [time_coupling_iteration(name if name != "compiled" else "c", args.repeats)
           for name in backends]
    print(f"{'coupling loss+grad, 7-edge chain':<36}"
          + "".join(f"{1e3 * t:>11.3f} ms" for t in row))


if __name__ == "__main__":
    main()
