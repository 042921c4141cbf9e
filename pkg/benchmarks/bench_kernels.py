#!/usr/bin/env python
"""Time the compiled kernel backend against the pure-numpy fallback.

Three kernels dominate the runtime of the package: the CSR matrix-vector
product (inner loop of BiCGStab), the postfix coefficient-program evaluator
(per-step drift/diffusion evaluation), and the Euler-Maruyama path loop.
This script times each on representative workloads and prints a table.

Run from an environment where the package is installed::

    python benchmarks/bench_kernels.py [--paths 512] [--repeats 5]
"""

import argparse
import time

import numpy as np

from firstexit import _kernels
from firstexit.assembly import assemble_elliptic
from firstexit.meshing import BoxDomain, mesh_box
from firstexit.models import builtin_model
from firstexit.montecarlo import _coefficient_programs


def best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_matvec(impl, repeats):
    model = builtin_model("tumor")
    domain = BoxDomain([0.0, 0.0, 0.0], [4.0, 2.0, 2.0])
    mesh = mesh_box(domain, 24)
    system = assemble_elliptic(mesh, model)
    a = system.matrix
    x = np.linspace(0.0, 1.0, a.n)
    n_calls = 50

    def run():
        for _ in range(n_calls):
            impl.csr_matvec(a.data, a.indices, a.indptr, x)

    seconds = best_time(run, repeats) / n_calls
    label = f"csr_matvec n={a.n} nnz={a.nnz}"
    return label, seconds, 2.0 * a.nnz / seconds / 1e9  # GFLOP/s

def bench_programs(impl, repeats):
    model = builtin_model("tumor")
    programs = _coefficient_programs(model)
    rng = np.random.default_rng(7)
    pts = rng.uniform(0.5, 1.5, size=(200_000, 3))

    def run():
        impl.run_programs(programs.code, programs.offsets, programs.consts,
                          programs.max_stack, pts)

    seconds = best_time(run, repeats)
    n_evals = pts.shape[0] * len(programs)
    label = f"run_programs {pts.shape[0]} pts x {len(programs)} programs"
    return label, seconds, n_evals / seconds / 1e6  # M evals/s


def bench_paths(impl, repeats, n_paths):
    model = builtin_model("rumor")
    domain = BoxDomain([0.7, 0.1], [0.9, 0.3])
    programs = _coefficient_programs(model)
    start = np.array([0.8, 0.2])
    dt = 2e-6
    max_steps = 20_000

    steps_holder = {}

    def run():
        status, steps = impl.simulate_paths(
            programs.code, programs.offsets, programs.consts,
            programs.max_stack, model.dimension, start,
            domain.lower, domain.upper, dt, max_steps, 12345, n_paths, 0)
        steps_holder["total"] = int(np.where(status == 1, max_steps, steps).sum())

    seconds = best_time(run, repeats)
    label = f"simulate_paths {n_paths} paths (rumor)"
    return label, seconds, steps_holder["total"] / seconds / 1e6  # M steps/s


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3, help="best-of repeats")
    ap.add_argument("--paths", type=int, default=512,
                    help="path count for the simulation benchmark")
    args = ap.parse_args()

    backends = _kernels.available_backends()
    print(f"available backends: {', '.join(backends)}")
    if "compiled" not in backends:
        print("note: compiled extension not built; timing the fallback only")

    benches = [
        ("matvec", bench_matvec, "GFLOP/s", None),
        ("programs", bench_programs, "Meval/s", None),
        ("paths", bench_paths, "Mstep/s", args.paths),
    ]
    results = {}
    for key, fn, unit, extra in benches:
        for name in backends:
            impl = _kernels.get_backend(name)
            if extra is None:
                label, seconds, rate = fn(impl, args.repeats)
            else:
                label, seconds, rate = fn(impl, args.repeats, extra)
            results[(key, name)] = (label, seconds, rate, unit)
            print(f"{name:>9}  {label:<45} {seconds * 1e3:9.2f} ms  "
                  f"{rate:8.2f} {unit}")
        if len(backends) == 2:
            t_py = results[(key, "python")][1]
            t_c = results[(key, "compiled")][1]
            print(f"{'':>9}  speedup compiled vs python: {t_py / t_c:6.1f}x")


if __name__ == "__main__":
    main()
