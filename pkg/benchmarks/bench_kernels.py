"""Timing comparison of the compiled and pure-python kernels.

Usage: python3 benchmarks/bench_kernels.py [--skip-macro]

Micro rows time the three sweep kernels on matrices taken from the real
solve path: 1D tridiagonal Newton bands, the five-point Jacobian of a
2D porous-medium step, and its nine-point Galerkin coarse level. The
macro row times a V-cycle-preconditioned GMRES solve of the same 2D
system through the public API, once per backend in a subprocess so the
import-time kernel dispatch stays honest.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

import degdiff as dd
from degdiff.kernels import pykernels

try:
    from degdiff.kernels import _ckernels
except ImportError:
    _ckernels = None


def best_seconds(fn) -> float:
    number, total = timeit.Timer(fn).autorange()
    return min(
        total / number,
        min(t / number for t in timeit.Timer(fn).repeat(repeat=3, number=number)),
    )


def two_dimensional_system(n: int = 63):
    law = dd.PowerLawDiffusion(4.0)
    grid = dd.UniformGrid(dimension=2, n_interior=n)
    initial = dd.sample_on_grid(dd.BarenblattSolution(m=4.0, dimension=2), grid, 1.0)
    ctx = dd.AssemblyContext(grid=grid, law=law, dt=grid.h, previous_state=initial)
    state, _ = dd.newton_step(ctx, dd.TimeStepperConfig(duration=1.0))
    jacobian = dd.assemble_jacobian(ctx, state)
    return grid, jacobian, -dd.residual(ctx, state)


def one_dimensional_bands(n: int = 511):
    law = dd.PowerLawDiffusion(2.0)
    grid = dd.UniformGrid(dimension=1, n_interior=n)
    initial = dd.sample_on_grid(dd.BarenblattSolution(m=2.0), grid, 1.0)
    ctx = dd.AssemblyContext(grid=grid, law=law, dt=grid.h, previous_state=initial)
    jacobian = dd.assemble_jacobian(ctx, initial)
    return jacobian.tridiagonal_bands(), -dd.residual(ctx, initial)


def micro_cases():
    (dl, d, du), rhs_1d = one_dimensional_bands()
    grid, jacobian, rhs_2d = two_dimensional_system()
    hierarchy = dd.build_hierarchy(jacobian, grid)
    fine = hierarchy.levels[0]
    coarse = hierarchy.levels[1]
    rng = np.random.default_rng(5)
    x_fine = rng.standard_normal(fine.A.shape[0])
    b_coarse = rng.standard_normal(coarse.A.shape[0])
    x_coarse = rng.standard_normal(coarse.A.shape[0])
    return [
        (
            "thomas, 1D Newton bands",
            len(d),
            lambda mod: mod.thomas(dl, d, du, rhs_1d),
        ),
        (
            "gauss-seidel, five-point",
            fine.A.shape[0],
            lambda mod: mod.gs_sweep(fine.A, rhs_2d, x_fine),
        ),
        (
            "red-black, five-point",
            fine.A.shape[0],
            lambda mod: mod.rb_sweep(fine.A, rhs_2d, x_fine, fine.red),
        ),
        (
            "red-black, nine-point coarse",
            coarse.A.shape[0],
            lambda mod: mod.rb_sweep(coarse.A, b_coarse, x_coarse, coarse.red),
        ),
    ]


_MACRO_SNIPPET = """
import time
import degdiff as dd
law = dd.PowerLawDiffusion(4.0)
grid = dd.UniformGrid(dimension=2, n_interior=63)
initial = dd.sample_on_grid(dd.BarenblattSolution(m=4.0, dimension=2), grid, 1.0)
ctx = dd.AssemblyContext(grid=grid, law=law, dt=grid.h, previous_state=initial)
state, _ = dd.newton_step(ctx, dd.TimeStepperConfig(duration=1.0))
jacobian = dd.assemble_jacobian(ctx, state)
rhs = -dd.residual(ctx, state)
hierarchy = dd.build_hierarchy(jacobian, grid)
preconditioner = dd.vcycle_preconditioner(hierarchy)
start = time.perf_counter()
_, report = dd.gmres_solve(jacobian, rhs, tol=1e-7, M=preconditioner)
elapsed = time.perf_counter() - start
print(f"{dd.KERNEL_BACKEND} {elapsed:.6f} {report.iterations} {report.converged}")
"""


def run_macro() -> list[tuple[str, float, str]]:
    rows = []
    for label, pure in (("compiled", None), ("python", "1")):
        env = dict(os.environ)
        env.pop("DEGDIFF_PURE_PYTHON", None)
        if pure is not None:
            env["DEGDIFF_PURE_PYTHON"] = pure
        proc = subprocess.run(
            [sys.executable, "-c", _MACRO_SNIPPET],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            rows.append((label, float("nan"), "failed: " + proc.stderr.strip()[-80:]))
            continue
        backend, elapsed, iterations, converged = proc.stdout.split()
        note = f"{iterations} iterations, backend={backend}"
        if converged != "True":
            note += ", NOT CONVERGED"
        rows.append((label, float(elapsed), note))
    return rows


def fmt_seconds(seconds: float) -> str:
    if seconds != seconds:  # nan
        return "    n/a"
    if seconds < 1e-3:
        return f"{seconds * 1e6:7.1f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:7.2f} ms"
    return f"{seconds:7.3f} s "


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--skip-macro", action="store_true",
                        help="only run the kernel micro-benchmarks")
    args = parser.parse_args(argv)

    print(f"active backend: {dd.KERNEL_BACKEND}")
    if _ckernels is None:
        print("compiled extension unavailable; timing the python kernels only")

    header = f"{'kernel':32} {'order':>6} {'compiled':>12} {'python':>12} {'speedup':>8}"
    print()
    print(header)
    print("-" * len(header))
    for name, order, call in micro_cases():
        python_t = best_seconds(lambda: call(pykernels))
        if _ckernels is not None:
            compiled_t = best_seconds(lambda: call(_ckernels))
            ratio = f"{python_t / compiled_t:7.1f}x"
            compiled_text = fmt_seconds(compiled_t)
        else:
            ratio = "    n/a"
            compiled_text = "    n/a"
        print(f"{name:32} {order:>6} {compiled_text:>12} "
              f"{fmt_seconds(python_t):>12} {ratio:>8}")

    if not args.skip_macro:
        print()
        print("macro: V-cycle PGMRES on the 2D Newton system (subprocess per backend)")
        for label, elapsed, note in run_macro():
            print(f"  {label:10} {fmt_seconds(elapsed):>12}   {note}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
