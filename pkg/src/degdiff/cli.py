"""Experiment runner.

Four commands, each emitting plot-ready CSV with '#' comment lines:

  converge    l2/max errors against the Barenblatt solution over a list
              of grid sizes, with the fitted order in a footer comment
  iterations  Newton counts per size plus inner-solver counts measured
              by replaying the recorded Newton systems
  spectrum    dense eigenvalue/singular-value reports of sampled Newton
              systems, optionally preconditioned
  solve       a single integration, dumping the final profile

Configuration is plain key=value lines; command-line flags override the
file. Grid sizes snap to the 2^k - 1 family required by the multigrid
coarsening, with a note in the output when they move.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (
    ConvergenceTable,
    fit_iteration_growth,
    fit_order,
    grid_error,
    newton_system_chain,
    replay_systems,
    spectral_report,
)
from .discretization import AssemblyContext
from .linsolve import (
    ConfigurationError,
    SmootherConfig,
    build_hierarchy,
    symmetric_part_preconditioner,
    vcycle_preconditioner,
)
from .newton import NewtonSolveError, TimeStepperConfig, integrate
from .problem import (
    BarenblattSolution,
    PowerLawDiffusion,
    StateVector,
    UniformGrid,
    sample_on_grid,
)

__all__ = ["ExperimentConfig", "parse_config_file", "build_config", "main"]

logger = logging.getLogger(__name__)

_COMMANDS = ("converge", "iterations", "spectrum", "solve")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str = "solve"
    dimension: int = 1
    m: float = 2.0
    n_list: tuple[int, ...] = (31,)
    dt_coefficient: float = 1.0
    t_start: float = 1.0 / 32.0
    duration: float = 20.0 / 32.0
    solver: str = "direct"
    preconditioner: str = "none"
    smoother: str | None = None
    omega: float = 2.0 / 3.0
    tol: float = 1e-7
    max_iter: int | None = None
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.command not in _COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.dimension not in (1, 2):
            raise ConfigurationError("dimension must be 1 or 2")
        if self.m < 1:
            raise ConfigurationError("m must be >= 1")
        if not self.n_list:
            raise ConfigurationError("need at least one grid size")
        if self.duration < 0:
            raise ConfigurationError("duration must be nonnegative")
        if self.tol <= 0:
            raise ConfigurationError("tolerance must be positive")


def snap_grid_size(n: int) -> int:
    """Nearest member of the 2^k - 1 coarsening family."""
    if n < 1:
        raise ConfigurationError("grid size must be positive")
    k = max(1, round(math.log2(n + 1)))
    return 2**k - 1


def parse_config_file(path: str) -> dict[str, str]:
    """key=value lines; blank lines and '#' comments ignored."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected key=value, got {line!r}"
                )
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_").lower()] = value.strip()
    return values


_PARSERS = {
    "command": str,
    "dim": int,
    "dimension": int,
    "m": float,
    "n": str,
    "dt_coeff": float,
    "dt_coefficient": float,
    "t0": float,
    "t_start": float,
    "duration": float,
    "solver": str,
    "precond": str,
    "preconditioner": str,
    "smoother": str,
    "omega": float,
    "tol": float,
    "max_iter": int,
    "seed": int,
    "out": str,
}

_CANONICAL = {
    "dim": "dimension",
    "dt_coeff": "dt_coefficient",
    "t0": "t_start",
    "precond": "preconditioner",
    "n": "n_list",
}


def _parse_n_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in str(text).replace(" ", "").split(",") if tok)
    except ValueError as exc:
        raise ConfigurationError(f"bad grid-size list {text!r}") from exc


def build_config(file_values: dict[str, str], overrides: dict[str, object]
                 ) -> tuple[ExperimentConfig, list[str]]:
    """Merges config-file values with command-line overrides (which win)
    and snaps grid sizes; returns the config and any notes to log."""
    merged: dict[str, object] = {}
    for key, raw in file_values.items():
        if key not in _PARSERS:
            raise ConfigurationError(f"unknown config key {key!r}")
        merged[_CANONICAL.get(key, key)] = (
            _parse_n_list(raw) if key == "n" else _PARSERS[key](raw)
        )
    for key, value in overrides.items():
        if value is None:
            continue
        merged[_CANONICAL.get(key, key)] = (
            _parse_n_list(value) if key == "n" else value
        )
    notes: list[str] = []
    if "n_list" in merged:
        snapped = []
        for n in merged["n_list"]:
            s = snap_grid_size(n)
            if s != n:
                notes.append(f"grid size {n} snapped to {s} (2^k - 1 family)")
            snapped.append(s)
        merged["n_list"] = tuple(dict.fromkeys(snapped))
    return ExperimentConfig(**merged), notes


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_rows(out: str | None, comments: list[str], header: list[str],
                rows: list[list]) -> None:
    """Atomic CSV write; None goes to stdout."""
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(out))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stepper_config(cfg: ExperimentConfig, solver: str | None = None
                    ) -> TimeStepperConfig:
    return TimeStepperConfig(
        duration=cfg.duration,
        dt_coefficient=cfg.dt_coefficient,
        solver=solver if solver is not None else cfg.solver,
        preconditioner=cfg.preconditioner,
        linear_tol=cfg.tol,
        linear_max_iter=cfg.max_iter,
    )


def _smoother_config(cfg: ExperimentConfig) -> SmootherConfig | None:
    if cfg.smoother is None:
        return None
    return SmootherConfig(kind=cfg.smoother, omega=cfg.omega)


def _problem_pieces(cfg: ExperimentConfig, n: int):
    law = PowerLawDiffusion(cfg.m)
    grid = UniformGrid(dimension=cfg.dimension, n_interior=n)
    exact = BarenblattSolution(m=cfg.m, dimension=cfg.dimension)
    initial = sample_on_grid(exact, grid, cfg.t_start)
    return law, grid, exact, initial


def run_converge(cfg: ExperimentConfig, notes: list[str]) -> int:
    if cfg.m <= 1:
        raise ConfigurationError("convergence study needs m > 1 (Barenblatt reference)")
    table = ConvergenceTable()
    comments = list(notes)
    comments.append(
        f"converge dim={cfg.dimension} m={_fmt(cfg.m)} dt={_fmt(cfg.dt_coefficient)}h "
        f"t0={_fmt(cfg.t_start)} duration={_fmt(cfg.duration)} solver={cfg.solver}"
    )
    rows: list[list] = []
    failures = 0
    for n in cfg.n_list:
        law, grid, exact, initial = _problem_pieces(cfg, n)
        try:
            result = integrate(law, grid, initial, _stepper_config(cfg))
        except NewtonSolveError as exc:
            comments.append(f"N={n}: integration failed: {exc}")
            rows.append([n, grid.h, "failed", "failed"])
            failures += 1
            continue
        reference = sample_on_grid(exact, grid, result.state.time)
        l2, linf = grid_error(result.state, reference, grid)
        table.add_row(n, grid.h, l2, linf)
        rows.append([n, grid.h, l2, linf])
    if len(table.rows) >= 3:
        comments.append(f"fitted_slope_l2 = {_fmt(fit_order(table))}")
        comments.append(f"fitted_slope_linf = {_fmt(fit_order(table, which='linf'))}")
    _write_rows(cfg.out, comments, ["N", "h", "l2_error", "linf_error"], rows)
    return 1 if failures else 0


def run_iterations(cfg: ExperimentConfig, notes: list[str]) -> int:
    comments = list(notes)
    comments.append(
        f"iterations dim={cfg.dimension} m={_fmt(cfg.m)} "
        f"dt={_fmt(cfg.dt_coefficient)}h solver={cfg.solver} "
        f"precond={cfg.preconditioner} tol={_fmt(cfg.tol)}"
    )
    comments.append(
        "inner counts measured by replaying the Newton systems of a "
        "direct-solver chain"
    )
    header = [
        "N", "newton_mean", "newton_min", "newton_max",
        "linear_mean", "linear_min", "linear_max", "failed_solves",
    ]
    rows: list[list] = []
    failures = 0
    means: dict[int, float] = {}
    for n in cfg.n_list:
        law, grid, _, initial = _problem_pieces(cfg, n)
        try:
            systems, result = newton_system_chain(
                law, grid, initial, _stepper_config(cfg, solver="direct")
            )
        except NewtonSolveError as exc:
            comments.append(f"N={n}: chain generation failed: {exc}")
            rows.append([n] + ["failed"] * 6 + [0])
            failures += 1
            continue
        stats = result.stats
        if cfg.solver == "direct":
            lin = [0] * len(systems)
            bad = 0
        else:
            reports = replay_systems(
                systems, law, grid, cfg.dt_coefficient * grid.h,
                solver=cfg.solver, preconditioner=cfg.preconditioner,
                tol=cfg.tol, max_iter=cfg.max_iter,
                smoother=_smoother_config(cfg),
            )
            lin = [r.iterations for r in reports]
            bad = sum(1 for r in reports if not r.converged)
        failures += bad
        mean = float(np.mean(lin)) if lin else 0.0
        means[n] = mean
        rows.append([
            n, stats.newton_mean, stats.newton_min, stats.newton_max,
            mean, min(lin, default=0), max(lin, default=0), bad,
        ])
    if (cfg.preconditioner == "none" and cfg.solver in ("gmres", "cg")
            and len(means) >= 3 and all(v > 0 for v in means.values())):
        q = fit_iteration_growth(list(means), [means[k] for k in means])
        comments.append(f"growth_exponent = {_fmt(q)}")
    _write_rows(cfg.out, comments, header, rows)
    return 1 if failures else 0


def run_spectrum(cfg: ExperimentConfig, notes: list[str]) -> int:
    n = cfg.n_list[0]
    if n > 256:
        raise ConfigurationError("spectrum command is dense; N <= 256")
    law, grid, _, initial = _problem_pieces(cfg, n)
    systems, _ = newton_system_chain(
        law, grid, initial, _stepper_config(cfg, solver="direct")
    )
    sampled = [rec for rec in systems if rec.newton_index == 1]
    code = 0
    for rec in sampled:
        M = None
        if cfg.preconditioner != "none":
            if cfg.preconditioner == "symmetric-part":
                ctx = AssemblyContext(
                    grid=grid, law=law, dt=cfg.dt_coefficient * grid.h,
                    previous_state=StateVector(values=rec.iterate, time=0.0),
                )
                M = symmetric_part_preconditioner(
                    ctx, StateVector(values=rec.iterate, time=0.0)
                )
            else:
                M = vcycle_preconditioner(
                    build_hierarchy(rec.jacobian, grid, _smoother_config(cfg))
                )
        diag = spectral_report(rec.jacobian, preconditioner=M)
        comments = list(notes)
        comments.append(
            f"spectrum step={rec.step} N={n} m={_fmt(cfg.m)} "
            f"precond={cfg.preconditioner}"
        )
        comments.append(f"order = {diag.order}")
        comments.append(
            f"bendixson_real = [{_fmt(diag.lambda_min_sym)}, "
            f"{_fmt(diag.lambda_max_sym)}]"
        )
        comments.append(f"bendixson_imag_halfwidth = {_fmt(diag.skew_bound)}")
        comments.append(f"sigma_min = {_fmt(diag.sigma_min)}")
        comments.append(f"cluster_target = {diag.target_description}")
        for eps, count in sorted(diag.cluster_counts.items(), reverse=True):
            comments.append(f"outliers_eps_{_fmt(eps)} = {count}")
        idx = np.argsort(-np.abs(diag.eigenvalues))
        rows = [
            [int(i), diag.eigenvalues[i].real, diag.eigenvalues[i].imag,
             diag.singular_values[j]]
            for j, i in enumerate(idx)
        ]
        out = cfg.out
        if out is not None and len(sampled) > 1:
            stem, ext = os.path.splitext(out)
            out = f"{stem}-step{rec.step:03d}{ext or '.csv'}"
        _write_rows(out, comments, ["index", "re", "im", "singular_value"], rows)
    return code


def run_solve(cfg: ExperimentConfig, notes: list[str]) -> int:
    n = cfg.n_list[0]
    law, grid, exact, initial = _problem_pieces(cfg, n)
    comments = list(notes)
    code = 0
    if cfg.duration == 0.0:
        state = initial
        comments.append(f"solve echo of initial sample at t={_fmt(cfg.t_start)}")
    else:
        try:
            result = integrate(law, grid, initial, _stepper_config(cfg))
        except NewtonSolveError as exc:
            comments.append(f"integration failed: {exc}")
            _write_rows(cfg.out, comments, ["x", "u"], [])
            return 1
        state = result.state
        stats = result.stats
        comments.append(
            f"solve N={n} m={_fmt(cfg.m)} final_t={_fmt(state.time)} "
            f"steps={stats.steps} newton_mean={_fmt(stats.newton_mean)}"
        )
        if stats.positivity_events:
            comments.append(
                f"negative undershoot events: {len(stats.positivity_events)} "
                f"(worst {_fmt(min(e[2] for e in stats.positivity_events))})"
            )
    coords = grid.interior_coordinates()
    if cfg.dimension == 1:
        header = ["x", "u"]
        rows = [[float(x), float(u)] for x, u in zip(coords, state.values)]
    else:
        header = ["x", "y", "u"]
        rows = [
            [float(x), float(y), float(u)]
            for (x, y), u in zip(coords, state.values)
        ]
    _write_rows(cfg.out, comments, header, rows)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="degdiff",
        description="experiment runner for the implicit degenerate-diffusion solver",
    )
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--command", choices=_COMMANDS)
    parser.add_argument("--dim", type=int, choices=(1, 2))
    parser.add_argument("--m", type=float)
    parser.add_argument("--N", dest="n", help="comma-separated grid sizes")
    parser.add_argument("--dt-coeff", dest="dt_coeff", type=float)
    parser.add_argument("--t0", dest="t0", type=float)
    parser.add_argument("--duration", type=float)
    parser.add_argument("--solver", choices=("direct", "gmres", "cg", "mgm"))
    parser.add_argument(
        "--precond", choices=("none", "symmetric-part", "vcycle")
    )
    parser.add_argument(
        "--smoother",
        choices=("damped-jacobi", "gauss-seidel", "red-black-gauss-seidel"),
    )
    parser.add_argument("--omega", type=float)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {
            key: getattr(args, key)
            for key in ("command", "dim", "m", "n", "dt_coeff", "t0", "duration",
                        "solver", "precond", "smoother", "omega", "tol",
                        "max_iter", "seed", "out")
        }
        cfg, notes = build_config(file_values, overrides)
        for note in notes:
            logger.info(note)
        runner = {
            "converge": run_converge,
            "iterations": run_iterations,
            "spectrum": run_spectrum,
            "solve": run_solve,
        }[cfg.command]
        return runner(cfg, notes)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
