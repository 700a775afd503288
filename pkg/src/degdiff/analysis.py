"""Verification instruments.

Error norms against reference solutions, convergence-order fits, a dense
finite-difference Jacobian used as the assembly oracle, and dense
spectral diagnostics: Bendixson rectangles, the singular-value lower
bound through the symmetric part, and eigenvalue cluster counts for
preconditioned operators.

Everything here is measurement. Dense conversions are size-guarded and
never sit on a solve path.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .discretization import AssemblyContext, StructuredMatrix
from .linsolve import (
    ConfigurationError,
    KrylovReport,
    NonsymmetricMatrixWarning,
    Preconditioner,
    SmootherConfig,
    build_hierarchy,
    cg_solve,
    gmres_solve,
    mgm_solve,
    symmetric_part_preconditioner,
    vcycle_preconditioner,
)
from .newton import IntegrationResult, TimeStepperConfig, integrate
from .problem import DiffusionLaw, StateVector, UniformGrid

__all__ = [
    "ConvergenceTable",
    "SpectralDiagnostics",
    "SigmaMinBound",
    "RecordedSystem",
    "grid_error",
    "fit_order",
    "fd_jacobian",
    "spectral_report",
    "verify_sigma_min_bound",
    "fit_iteration_growth",
    "fit_stability_constant",
    "newton_system_chain",
    "replay_systems",
]

_DENSE_DIAGNOSTIC_GUARD = 256
_FD_ORDER_GUARD = 1024  # covers N <= 512 in 1D and N <= 32 per direction in 2D


@dataclass
class ConvergenceTable:
    """Rows of (N, h, l2 error, max error), kept sorted by N."""

    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    def add_row(self, n: int, h: float, l2: float, linf: float):
        self.rows.append((int(n), float(h), float(l2), float(linf)))
        self.rows.sort(key=lambda row: row[0])

    @property
    def slope(self) -> float:
        return fit_order(self)


class SigmaMinBound(NamedTuple):
    sigma_min: float
    lambda_min_sym: float
    holds: bool


@dataclass
class SpectralDiagnostics:
    """Dense eigenvalue/singular-value picture of one matrix.

    ``cluster_counts[eps]`` is the number of eigenvalues farther than
    eps from the target set (a point set or a real interval), so the
    counts are non-increasing in eps.
    """

    order: int
    eigenvalues: np.ndarray
    singular_values: np.ndarray
    sigma_min: float
    lambda_min_sym: float
    lambda_max_sym: float
    skew_bound: float
    cluster_counts: dict[float, int]
    target_description: str

    @property
    def bendixson_rectangle(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (
            (self.lambda_min_sym, self.lambda_max_sym),
            (-self.skew_bound, self.skew_bound),
        )


def grid_error(u_num: StateVector, u_exact: StateVector, grid: UniformGrid
               ) -> tuple[float, float]:
    """Grid-scaled l2 error sqrt(h^d sum d_k^2) and max error."""
    a = np.asarray(u_num.values, dtype=float)
    b = np.asarray(u_exact.values, dtype=float)
    if a.shape != b.shape or a.shape != (grid.n_unknowns,):
        raise ConfigurationError("states do not share the grid")
    d = a - b
    l2 = float(np.sqrt(grid.h**grid.dimension * np.sum(d * d)))
    linf = float(np.max(np.abs(d))) if d.size else 0.0
    return l2, linf


def _ls_slope(x: np.ndarray, y: np.ndarray) -> float:
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def fit_order(table: ConvergenceTable, which: str = "l2") -> float:
    """Least-squares slope of log error against log h."""
    if len(table.rows) < 3:
        raise ConfigurationError("order fit needs at least 3 rows")
    hs = np.array([row[1] for row in table.rows])
    col = 2 if which == "l2" else 3
    errs = np.array([row[col] for row in table.rows])
    if np.any(errs <= 0):
        raise ConfigurationError("order fit needs positive errors")
    return _ls_slope(np.log(hs), np.log(errs))


def fd_jacobian(residual_fn: Callable[[np.ndarray], np.ndarray],
                u: np.ndarray, step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of ``residual_fn`` at ``u``, column by
    column with per-column step sqrt(machine eps) * max(1, |u_j|).

    Dense and O(n) residual evaluations; guarded to modest sizes since
    its only job is to referee the analytic assembly.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    if n > _FD_ORDER_GUARD:
        raise ConfigurationError(
            f"finite-difference Jacobian guarded at order {_FD_ORDER_GUARD}"
        )
    base_step = np.sqrt(np.finfo(float).eps)
    J = np.empty((n, n))
    for j in range(n):
        dj = step if step is not None else base_step * max(1.0, abs(u[j]))
        up = u.copy()
        um = u.copy()
        up[j] += dj
        um[j] -= dj
        J[:, j] = (residual_fn(up) - residual_fn(um)) / (2.0 * dj)
    return J


def _dense(A, guard: int = _DENSE_DIAGNOSTIC_GUARD) -> np.ndarray:
    if isinstance(A, StructuredMatrix):
        if A.order > guard:
            raise ConfigurationError(f"diagnostic guarded at order {guard}")
        return A.to_dense()
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigurationError("need a square matrix")
    if arr.shape[0] > guard:
        raise ConfigurationError(f"diagnostic guarded at order {guard}")
    return arr


def _distance_to_target(lams: np.ndarray, target) -> np.ndarray:
    if isinstance(target, tuple) and len(target) == 2 and not np.iterable(target[0]):
        lo, hi = float(target[0]), float(target[1])
        dre = np.maximum(np.maximum(lo - lams.real, lams.real - hi), 0.0)
        return np.hypot(dre, lams.imag)
    pts = np.atleast_1d(np.asarray(target, dtype=complex))
    return np.min(np.abs(lams[:, None] - pts[None, :]), axis=1)


def spectral_report(A, preconditioner: Preconditioner | None = None,
                    epsilons: tuple[float, ...] = (0.2, 0.1, 0.05, 0.02),
                    target=None) -> SpectralDiagnostics:
    """Dense spectrum of A, or of M^-1 A when a preconditioner is given.

    The default cluster target is {1} for preconditioned matrices and
    the real interval spanned by the symmetric part's spectrum otherwise.
    """
    Ad = _dense(A)
    n = Ad.shape[0]
    if preconditioner is not None:
        B = np.column_stack([preconditioner.solve(Ad[:, j]) for j in range(n)])
        default_target = np.array([1.0])
        desc = "point set {1}"
    else:
        B = Ad
        default_target = None
        desc = "interval hull of symmetric-part spectrum"
    sym = 0.5 * (B + B.T)
    skew = 0.5 * (B - B.T)
    sym_eigs = np.linalg.eigvalsh(sym)
    lam = np.linalg.eigvals(B)
    sv = np.linalg.svd(B, compute_uv=False)
    skew_bound = float(np.linalg.svd(skew, compute_uv=False)[0]) if n else 0.0
    if target is None:
        target = default_target
        if target is None:
            target = (float(sym_eigs[0]), float(sym_eigs[-1]))
    else:
        desc = "caller-specified"
    dist = _distance_to_target(lam, target)
    counts = {float(e): int(np.sum(dist > e)) for e in epsilons}
    return SpectralDiagnostics(
        order=n,
        eigenvalues=lam,
        singular_values=sv,
        sigma_min=float(sv[-1]),
        lambda_min_sym=float(sym_eigs[0]),
        lambda_max_sym=float(sym_eigs[-1]),
        skew_bound=skew_bound,
        cluster_counts=counts,
        target_description=desc,
    )


def verify_sigma_min_bound(A) -> SigmaMinBound:
    """Checks sigma_min(A) >= lambda_min((A + A^T)/2), a consequence of
    the symmetric part being a lower bound in the singular-value sense."""
    Ad = _dense(A)
    sv = np.linalg.svd(Ad, compute_uv=False)
    sym_eigs = np.linalg.eigvalsh(0.5 * (Ad + Ad.T))
    sigma_min = float(sv[-1])
    lam_min = float(sym_eigs[0])
    return SigmaMinBound(sigma_min, lam_min, sigma_min >= lam_min - 1e-10)


def fit_iteration_growth(sizes, mean_iterations) -> float:
    """Least-squares exponent q in iterations ~ N^q."""
    sizes = np.asarray(sizes, dtype=float)
    means = np.asarray(mean_iterations, dtype=float)
    if sizes.shape != means.shape or sizes.size < 3:
        raise ConfigurationError("growth fit needs at least 3 sizes")
    if np.any(sizes <= 0) or np.any(means <= 0):
        raise ConfigurationError("growth fit needs positive data")
    return _ls_slope(np.log(sizes), np.log(means))


def fit_stability_constant(dts, lambda_min_values) -> float:
    """Fits C in lambda_min(sym F') ~ 1 - C dt through the origin.

    The constant is recorded by the diagnostics, not asserted against
    any particular value; it quantifies how far below one the symmetric
    part's spectrum can sink as the time step grows.
    """
    dts = np.asarray(dts, dtype=float)
    lam = np.asarray(lambda_min_values, dtype=float)
    if dts.shape != lam.shape or dts.size < 2:
        raise ConfigurationError("stability fit needs at least 2 points")
    denom = float(dts @ dts)
    if denom == 0.0:
        raise ConfigurationError("stability fit needs nonzero time steps")
    return float(dts @ (1.0 - lam)) / denom


# ---------------------------------------------------------------------------
# Canonical Newton-system chains


@dataclass
class RecordedSystem:
    """One linear system exactly as the Newton iteration posed it."""

    step: int
    newton_index: int
    jacobian: StructuredMatrix
    rhs: np.ndarray
    iterate: np.ndarray


def newton_system_chain(law: DiffusionLaw, grid: UniformGrid,
                        initial: StateVector, config: TimeStepperConfig
                        ) -> tuple[list[RecordedSystem], IntegrationResult]:
    """Integrates with direct inner solves and records every Newton
    system along the way.

    This is the measurement harness for comparing iterative solvers: all
    of them see the identical sequence of systems from the identical
    Newton trajectory, rather than each solver perturbing its own
    trajectory through inexact steps.
    """
    systems: list[RecordedSystem] = []

    def recorder(step, k, J, rhs, iterate):
        systems.append(RecordedSystem(step, k, J, rhs, iterate))

    run_config = TimeStepperConfig(
        duration=config.duration,
        dt_coefficient=config.dt_coefficient,
        stopping_coefficient=config.stopping_coefficient,
        max_newton_iterations=config.max_newton_iterations,
        solver="direct",
    )
    result = integrate(law, grid, initial, run_config, system_recorder=recorder)
    return systems, result


def replay_systems(systems: list[RecordedSystem], law: DiffusionLaw,
                   grid: UniformGrid, dt: float, solver: str,
                   preconditioner: str = "none", tol: float = 1e-7,
                   max_iter: int | None = None,
                   smoother: SmootherConfig | None = None
                   ) -> list[KrylovReport]:
    """Runs one iterative solver over every recorded system.

    The nonsymmetric-CG warning is silenced here: feeding Newton
    Jacobians to CG is the point of the measurement, not an accident.
    """
    reports: list[KrylovReport] = []
    for rec in systems:
        M = None
        if preconditioner == "symmetric-part":
            ctx = AssemblyContext(
                grid=grid, law=law, dt=dt,
                previous_state=StateVector(values=rec.iterate, time=0.0),
            )
            M = symmetric_part_preconditioner(
                ctx, StateVector(values=rec.iterate, time=0.0)
            )
        elif preconditioner == "vcycle":
            M = vcycle_preconditioner(
                build_hierarchy(rec.jacobian, grid, smoother)
            )
        elif preconditioner != "none":
            raise ConfigurationError(f"unknown preconditioner {preconditioner!r}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonsymmetricMatrixWarning)
            if solver == "gmres":
                _, rep = gmres_solve(rec.jacobian, rec.rhs, tol=tol,
                                     max_iter=max_iter, M=M)
            elif solver == "cg":
                _, rep = cg_solve(rec.jacobian, rec.rhs, tol=tol,
                                  max_iter=max_iter, M=M)
            elif solver == "mgm":
                _, rep = mgm_solve(rec.jacobian, rec.rhs, tol=tol,
                                   max_iter=max_iter or 100,
                                   grid=grid, smoother_config=smoother)
            else:
                raise ConfigurationError(f"unknown solver {solver!r}")
        reports.append(rep)
    return reports
