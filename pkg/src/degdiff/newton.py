"""Implicit time stepping by Newton's method.

One step advances u^{n-1} to u^n by solving the nonlinear system
F(u) = u - (dt/h^2) L_D(u) u - u^{n-1} = 0 with a full Newton iteration:
the Jacobian is reassembled at every iterate, the initial guess is the
previous time level, and the update stops once its max norm drops below
0.1 h. Inner linear solves are pluggable: direct, GMRES, CG, or the
stationary V-cycle iteration, with optional preconditioning.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .discretization import (
    AssemblyContext,
    StructuredMatrix,
    assemble_jacobian,
    residual,
)
from .linsolve import (
    ConfigurationError,
    KrylovReport,
    build_hierarchy,
    cg_solve,
    gmres_solve,
    mgm_solve,
    symmetric_part_preconditioner,
    thomas_solve,
    vcycle_preconditioner,
)
from .problem import DiffusionLaw, StateVector, UniformGrid

__all__ = [
    "TimeStepperConfig",
    "TimeStepWarning",
    "NewtonSolveError",
    "NewtonReport",
    "SolveStats",
    "IntegrationResult",
    "newton_step",
    "integrate",
]

logger = logging.getLogger(__name__)

_SOLVERS = ("direct", "gmres", "cg", "mgm")
_PRECONDITIONERS = ("none", "symmetric-part", "vcycle")

# dense fallback bound when a tridiagonal direct solve hits a zero pivot
_DENSE_FALLBACK_LIMIT = 2048


class TimeStepWarning(UserWarning):
    """The time step is large relative to the mesh; the implicit scheme
    stays stable but accuracy and Newton behaviour degrade."""


class NewtonSolveError(RuntimeError):
    """Newton iteration failed: either the inner linear solve broke down
    or the update never met the stopping rule."""

    def __init__(self, message: str, report: "NewtonReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TimeStepperConfig:
    """Time-march parameters. The step is dt = dt_coefficient * h, tied
    to the mesh so the Newton stopping threshold 0.1 h and the step
    shrink together under refinement."""

    duration: float
    dt_coefficient: float = 1.0
    stopping_coefficient: float = 0.1
    max_newton_iterations: int = 50
    solver: str = "direct"
    preconditioner: str = "none"
    linear_tol: float = 1e-7
    linear_max_iter: int | None = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigurationError("duration must be positive")
        if self.dt_coefficient <= 0:
            raise ConfigurationError("dt_coefficient must be positive")
        if self.solver not in _SOLVERS:
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        if self.preconditioner not in _PRECONDITIONERS:
            raise ConfigurationError(
                f"unknown preconditioner {self.preconditioner!r}"
            )
        if self.dt_coefficient > 5:
            warnings.warn(
                f"dt = {self.dt_coefficient} h is aggressively large; "
                "expect degraded accuracy and slow Newton convergence",
                TimeStepWarning,
                stacklevel=2,
            )


@dataclass
class NewtonReport:
    """Per-time-step record of the Newton iteration."""

    iterations: int
    converged: bool
    step_norms_inf: list[float] = field(default_factory=list)
    step_norms_two: list[float] = field(default_factory=list)
    linear_iterations: list[int] = field(default_factory=list)
    linear_reports: list[KrylovReport | None] = field(default_factory=list)


@dataclass
class SolveStats:
    """Aggregates over a whole integration."""

    steps: int = 0
    newton_per_step: list[int] = field(default_factory=list)
    linear_per_system: list[int] = field(default_factory=list)
    positivity_events: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def newton_mean(self) -> float:
        return float(np.mean(self.newton_per_step)) if self.newton_per_step else 0.0

    @property
    def newton_max(self) -> int:
        return max(self.newton_per_step) if self.newton_per_step else 0

    @property
    def newton_min(self) -> int:
        return min(self.newton_per_step) if self.newton_per_step else 0

    @property
    def linear_mean(self) -> float:
        return float(np.mean(self.linear_per_system)) if self.linear_per_system else 0.0


@dataclass
class IntegrationResult:
    state: StateVector
    stats: SolveStats
    reports: list[NewtonReport]


def _direct_solve(J: StructuredMatrix, rhs: np.ndarray) -> np.ndarray:
    if J.kind == "tridiagonal":
        try:
            return thomas_solve(J, rhs)
        except np.linalg.LinAlgError:
            if J.order > _DENSE_FALLBACK_LIMIT:
                raise
            return np.linalg.solve(J.to_dense(), rhs)
    return spla.spsolve(J.to_csr().tocsc(), rhs)


def _solve_system(J: StructuredMatrix, rhs: np.ndarray, u: StateVector,
                  ctx: AssemblyContext, config: TimeStepperConfig):
    """Dispatch one linear solve; returns (delta, KrylovReport | None)."""
    if config.solver == "direct":
        return _direct_solve(J, rhs), None
    if config.solver == "mgm":
        return mgm_solve(J, rhs, tol=config.linear_tol,
                         max_iter=config.linear_max_iter or 100,
                         grid=ctx.grid)
    M = None
    if config.preconditioner == "symmetric-part":
        M = symmetric_part_preconditioner(ctx, u)
    elif config.preconditioner == "vcycle":
        M = vcycle_preconditioner(build_hierarchy(J, ctx.grid))
    if config.solver == "gmres":
        return gmres_solve(J, rhs, tol=config.linear_tol,
                           max_iter=config.linear_max_iter, M=M)
    return cg_solve(J, rhs, tol=config.linear_tol,
                    max_iter=config.linear_max_iter, M=M)


def newton_step(ctx: AssemblyContext, config: TimeStepperConfig,
                system_recorder=None,
                step_index: int = 0) -> tuple[StateVector, NewtonReport]:
    """One implicit step from ``ctx.previous_state``.

    ``system_recorder(step_index, newton_index, jacobian, rhs, iterate)``
    is invoked for every linear system right before it is solved, so a
    caller can replay the exact Newton systems against other solvers.
    """
    eps = config.stopping_coefficient * ctx.grid.h
    t_new = ctx.previous_state.time + ctx.dt
    u = StateVector(
        values=np.array(ctx.previous_state.values, dtype=float, copy=True),
        time=t_new,
    )
    report = NewtonReport(iterations=0, converged=False)
    for k in range(1, config.max_newton_iterations + 1):
        F = residual(ctx, u)
        J = assemble_jacobian(ctx, u)
        rhs = -F
        if system_recorder is not None:
            system_recorder(step_index, k, J, rhs.copy(), u.values.copy())
        try:
            delta, lin_report = _solve_system(J, rhs, u, ctx, config)
        except np.linalg.LinAlgError as exc:
            report.iterations = k
            raise NewtonSolveError(
                f"linear solve failed at Newton iteration {k}: {exc}", report
            ) from exc
        if lin_report is not None:
            report.linear_iterations.append(lin_report.iterations)
            report.linear_reports.append(lin_report)
            if not lin_report.converged:
                report.iterations = k
                raise NewtonSolveError(
                    f"inner solver stalled at Newton iteration {k} "
                    f"(relative residual {lin_report.achieved:.3e}, "
                    f"breakdown={lin_report.breakdown})",
                    report,
                )
        else:
            report.linear_iterations.append(0)
            report.linear_reports.append(None)
        u.values += delta
        report.step_norms_inf.append(float(np.max(np.abs(delta))))
        report.step_norms_two.append(float(np.linalg.norm(delta)))
        report.iterations = k
        if report.step_norms_inf[-1] <= eps:
            report.converged = True
            break
    if not report.converged:
        raise NewtonSolveError(
            f"Newton did not meet |delta|_inf <= {eps:.3e} within "
            f"{config.max_newton_iterations} iterations",
            report,
        )
    return u, report


def integrate(law: DiffusionLaw, grid: UniformGrid, initial: StateVector,
              config: TimeStepperConfig,
              system_recorder=None) -> IntegrationResult:
    """March ceil(duration / dt) implicit steps from the initial state.

    Negative undershoots beyond 1e-8 * |u|_inf are logged and counted,
    never fatal: the continuous solution is nonnegative but the discrete
    iterates may dip slightly below zero near the support boundary.
    """
    if initial.values.shape != (grid.n_unknowns,):
        raise ConfigurationError("initial state does not match grid")
    dt = config.dt_coefficient * grid.h
    # tiny slack so an exact multiple of dt is not rounded up a step
    n_steps = max(1, math.ceil(config.duration / dt - 1e-12))
    stats = SolveStats()
    reports: list[NewtonReport] = []
    state = StateVector(
        values=np.array(initial.values, dtype=float, copy=True),
        time=initial.time,
    )
    for step in range(1, n_steps + 1):
        ctx = AssemblyContext(grid=grid, law=law, dt=dt, previous_state=state)
        state, rep = newton_step(ctx, config, system_recorder=system_recorder,
                                 step_index=step)
        reports.append(rep)
        stats.newton_per_step.append(rep.iterations)
        stats.linear_per_system.extend(rep.linear_iterations)
        u = state.values
        scale = float(np.max(np.abs(u))) if u.size else 0.0
        umin = float(u.min()) if u.size else 0.0
        if umin < -1e-8 * scale:
            stats.positivity_events.append((step, state.time, umin))
            logger.warning(
                "step %d (t=%.6f): negative undershoot min(u)=%.3e",
                step, state.time, umin,
            )
    stats.steps = n_steps
    return IntegrationResult(state=state, stats=stats, reports=reports)
