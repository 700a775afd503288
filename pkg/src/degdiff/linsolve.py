"""Iterative solvers and preconditioners for the Newton systems.

Implements full GMRES and CG with optional preconditioning, a direct
tridiagonal solve, and a Galerkin V-cycle multigrid usable either as a
stationary solver or as a fixed one-sweep preconditioner.

Stopping rule everywhere: true relative residual ||b - A x|| / ||b||
<= tol. GMRES applies its preconditioner on the right so the Arnoldi
recurrence controls exactly that quantity.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .discretization import (
    AssemblyContext,
    StructuredMatrix,
    assemble_operator,
)
from .problem import StateVector, UniformGrid

__all__ = [
    "KrylovReport",
    "LinearOperator",
    "Preconditioner",
    "SmootherConfig",
    "MultigridHierarchy",
    "NonsymmetricMatrixWarning",
    "ConfigurationError",
    "cg_solve",
    "gmres_solve",
    "thomas_solve",
    "build_hierarchy",
    "vcycle",
    "mgm_solve",
    "vcycle_preconditioner",
    "symmetric_part_preconditioner",
    "assemble_x_part",
]


class NonsymmetricMatrixWarning(UserWarning):
    """CG applied to a matrix that is not symmetric; convergence theory
    does not apply and stagnation is a real possibility."""


class ConfigurationError(ValueError):
    pass


@dataclass
class KrylovReport:
    """Outcome of one iterative solve.

    ``residual_history`` records relative residual norms, starting at
    the initial guess; the final entry is recomputed from the returned
    iterate, so a converged report always ends at or below ``tolerance``.
    ``breakdown`` marks an exact-arithmetic failure (division by ~0 in a
    recurrence), distinct from running out of iterations.
    """

    iterations: int
    residual_history: list[float]
    converged: bool
    tolerance: float
    achieved: float
    breakdown: bool = False


class LinearOperator:
    """Minimal operator wrapper: an ``apply`` map plus its order.

    Keeps a reference to the concrete matrix when one exists so that
    assembly-based algorithms (hierarchy building, symmetry checks) can
    get at the entries.
    """

    def __init__(self, apply, order: int, source=None):
        self._apply = apply
        self.order = int(order)
        self.source = source

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._apply(x)

    @staticmethod
    def wrap(A) -> "LinearOperator":
        if isinstance(A, LinearOperator):
            return A
        if isinstance(A, StructuredMatrix):
            return LinearOperator(A.matvec, A.order, source=A)
        if sp.issparse(A):
            if A.shape[0] != A.shape[1]:
                raise ConfigurationError("operator must be square")
            Ac = A.tocsr()
            return LinearOperator(lambda x: Ac @ x, Ac.shape[0], source=Ac)
        arr = np.asarray(A)
        if arr.ndim == 2:
            if arr.shape[0] != arr.shape[1]:
                raise ConfigurationError("operator must be square")
            return LinearOperator(lambda x: arr @ x, arr.shape[0], source=arr)
        raise ConfigurationError(f"cannot wrap {type(A).__name__} as an operator")


class Preconditioner:
    """Approximate inverse M^-1 applied through ``solve``."""

    def __init__(self, solve, descriptor: str = "none"):
        self._solve = solve
        self.descriptor = descriptor

    def solve(self, r: np.ndarray) -> np.ndarray:
        return self._solve(r)


def _maybe_dense_or_sparse(A):
    """Concrete matrix behind an operator, or None."""
    src = A.source if isinstance(A, LinearOperator) else A
    if isinstance(src, StructuredMatrix) or sp.issparse(src):
        return src
    if isinstance(src, np.ndarray) and src.ndim == 2:
        return src
    return None


def _is_symmetric(Amat) -> bool:
    if isinstance(Amat, StructuredMatrix):
        return Amat.is_symmetric()
    if sp.issparse(Amat):
        d = Amat - Amat.T
        return d.nnz == 0 or np.max(np.abs(d.data)) == 0.0
    return bool(np.array_equal(Amat, Amat.T))


def thomas_solve(A, b: np.ndarray) -> np.ndarray:
    """Direct tridiagonal solve. ``A`` is a tridiagonal StructuredMatrix
    or a (dl, d, du) band triple with dl[0]/du[-1] as padding."""
    if isinstance(A, StructuredMatrix):
        dl, d, du = A.tridiagonal_bands()
    else:
        dl, d, du = (np.ascontiguousarray(v, dtype=float) for v in A)
    b = np.ascontiguousarray(b, dtype=float)
    try:
        return kernels.thomas(dl, d, du, b)
    except ZeroDivisionError as exc:
        raise np.linalg.LinAlgError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Krylov solvers


def _finish(x, A, b, bn, history, tol, iterations, breakdown=False):
    achieved = float(np.linalg.norm(b - A.apply(x)) / bn)
    if history:
        history[-1] = achieved
    else:
        history.append(achieved)
    return x, KrylovReport(
        iterations=iterations,
        residual_history=history,
        converged=bool(achieved <= tol * (1.0 + 1e-9)) and not breakdown,
        tolerance=tol,
        achieved=achieved,
        breakdown=breakdown,
    )


def gmres_solve(A, b, tol: float = 1e-7, max_iter: int | None = None,
                M: Preconditioner | None = None, restart: int | None = None):
    """Full (non-restarted) GMRES with optional right preconditioning.

    ``restart`` exists purely as a memory escape hatch for very large
    systems; it changes the method to GMRES(restart) with the same
    stopping rule.
    """
    A = LinearOperator.wrap(A)
    b = np.asarray(b, dtype=float)
    n = A.order
    if max_iter is None:
        max_iter = n
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return np.zeros(n), KrylovReport(0, [0.0], True, tol, 0.0)

    if restart is not None:
        return _gmres_restarted(A, b, tol, max_iter, M, restart, bn)

    x, hist, its, done = _gmres_cycle(A, b, np.zeros(n), tol, max_iter, M, bn)
    return _finish(x, A, b, bn, hist, tol, its)


def _gmres_restarted(A, b, tol, max_iter, M, restart, bn):
    n = A.order
    x = np.zeros(n)
    history = [1.0]
    total = 0
    while total < max_iter:
        r = b - A.apply(x)
        rn = float(np.linalg.norm(r))
        if rn <= tol * bn:
            break
        budget = min(restart, max_iter - total)
        dx, hist, its, done = _gmres_cycle(A, r, np.zeros(n), tol * bn / rn,
                                           budget, M, rn)
        x = x + dx
        history.extend(float(v) * rn / bn for v in hist[1:])
        total += its
        if done:
            break
    return _finish(x, A, b, bn, history, tol, total)


def _gmres_cycle(A, b, x0, tol, max_iter, M, bn):
    """One full-GMRES build-up from x0 = 0; returns (x, history, k, converged)."""
    n = A.order
    V = np.zeros((max_iter + 1, n))
    H = np.zeros((max_iter + 1, max_iter))
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    V[0] = b / bn
    g[0] = bn
    history = [1.0]
    k = 0
    converged = False
    for k in range(1, max_iter + 1):
        j = k - 1
        w = A.apply(M.solve(V[j]) if M is not None else V[j])
        # modified Gram-Schmidt with one reorthogonalization pass
        for _ in range(2):
            for i in range(k):
                hij = w @ V[i]
                H[i, j] += hij
                w -= hij * V[i]
        H[k, j] = np.linalg.norm(w)
        lucky = H[k, j] < 1e-14 * bn
        if not lucky:
            V[k] = w / H[k, j]
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        d = np.hypot(H[j, j], H[k, j])
        if d == 0.0:
            # dead column; drop it and stop
            k -= 1
            break
        cs[j], sn[j] = H[j, j] / d, H[k, j] / d
        H[j, j] = d
        H[k, j] = 0.0
        g[k] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        history.append(abs(g[k]) / bn)
        if history[-1] <= tol or lucky:
            converged = True
            break
    y = np.linalg.solve(H[:k, :k], g[:k]) if k else np.zeros(0)
    z = V[:k].T @ y
    x = x0 + (M.solve(z) if M is not None else z)
    return x, history, k, converged


def cg_solve(A, b, tol: float = 1e-7, max_iter: int | None = None,
             M: Preconditioner | None = None):
    """Preconditioned conjugate gradients with true-residual stopping.

    The recurrences assume A symmetric positive definite. Applying CG to
    a mildly nonsymmetric matrix is permitted (and warned about loudly):
    the iteration may still converge, but it may equally stagnate, which
    is reported as converged=False rather than raising.
    """
    A = LinearOperator.wrap(A)
    b = np.asarray(b, dtype=float)
    n = A.order
    if max_iter is None:
        max_iter = n
    Amat = _maybe_dense_or_sparse(A)
    if Amat is not None and not _is_symmetric(Amat):
        warnings.warn(
            "cg_solve applied to a nonsymmetric matrix; CG theory does not apply",
            NonsymmetricMatrixWarning,
            stacklevel=2,
        )
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return np.zeros(n), KrylovReport(0, [0.0], True, tol, 0.0)
    x = np.zeros(n)
    r = b.copy()
    z = M.solve(r) if M is not None else r
    p = z.copy()
    rz = float(r @ z)
    history = [1.0]
    k = 0
    breakdown = False
    for k in range(1, max_iter + 1):
        Ap = A.apply(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or abs(pAp) < 1e-300:
            breakdown = True
            k -= 1
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        history.append(float(np.linalg.norm(r) / bn))
        if history[-1] <= tol:
            break
        z = M.solve(r) if M is not None else r
        rz_new = float(r @ z)
        if not np.isfinite(rz_new) or abs(rz) < 1e-300:
            breakdown = True
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return _finish(x, A, b, bn, history, tol, k, breakdown=breakdown)


# ---------------------------------------------------------------------------
# Geometric multigrid


@dataclass(frozen=True)
class SmootherConfig:
    """Smoother selection for the V-cycle.

    kind: damped-jacobi | gauss-seidel | red-black-gauss-seidel.
    ``omega`` applies to damped Jacobi only. Defaults follow the scheme's
    design: one damped-Jacobi(2/3) pre-smoothing step, no post-smoothing;
    red-black Gauss-Seidel is the 2D default chosen by callers.
    """

    kind: str = "damped-jacobi"
    omega: float = 2.0 / 3.0
    pre_steps: int = 1
    post_steps: int = 0

    def __post_init__(self):
        if self.kind not in ("damped-jacobi", "gauss-seidel", "red-black-gauss-seidel"):
            raise ConfigurationError(f"unknown smoother {self.kind!r}")
        if self.pre_steps < 0 or self.post_steps < 0:
            raise ConfigurationError("smoothing step counts must be >= 0")


@dataclass
class _Level:
    A: sp.csr_matrix
    diag: np.ndarray
    P: sp.csr_matrix | None       # prolongation from the next-coarser level
    red: np.ndarray | None        # uint8 colour mask (2D only)
    dense: np.ndarray | None = None  # coarsest-level matrix


@dataclass
class MultigridHierarchy:
    """Galerkin chain A_{i+1} = P^T A_i P down to a directly-solved
    coarsest level of order <= 3."""

    levels: list[_Level]
    smoother: SmootherConfig
    dimension: int
    coarsest_size: int = 3

    @property
    def depth(self) -> int:
        return len(self.levels)


def _csr32(A) -> sp.csr_matrix:
    # compiled kernels take int32 index arrays
    A = sp.csr_matrix(A)
    A.sort_indices()
    if A.indptr.dtype != np.int32:
        A = sp.csr_matrix(
            (A.data, A.indices.astype(np.int32), A.indptr.astype(np.int32)),
            shape=A.shape,
        )
    return A


def _prolongation_1d(n_fine: int) -> sp.csr_matrix:
    n_coarse = (n_fine - 1) // 2
    rows = np.empty(3 * n_coarse, dtype=np.int64)
    cols = np.empty(3 * n_coarse, dtype=np.int64)
    vals = np.empty(3 * n_coarse)
    j = np.arange(n_coarse)
    rows[0::3], cols[0::3], vals[0::3] = 2 * j, j, 0.5
    rows[1::3], cols[1::3], vals[1::3] = 2 * j + 1, j, 1.0
    rows[2::3], cols[2::3], vals[2::3] = 2 * j + 2, j, 0.5
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_fine, n_coarse))


def _red_mask(n: int) -> np.ndarray:
    i = np.arange(n * n) % n
    j = np.arange(n * n) // n
    return ((i + j) % 2 == 0).astype(np.uint8)


def build_hierarchy(A_fine, grid: UniformGrid, smoother_config: SmootherConfig | None = None
                    ) -> MultigridHierarchy:
    """Coarsen by linear (1D) or bilinear (2D) interpolation with
    restriction = transpose and Galerkin coarse operators.

    Grid sizes must come from the N = 2^k - 1 family so that nested
    coarsening is possible; anything else is a configuration error.
    """
    if smoother_config is None:
        smoother_config = SmootherConfig() if grid.dimension == 1 else SmootherConfig(
            kind="red-black-gauss-seidel"
        )
    if isinstance(A_fine, StructuredMatrix):
        A = _csr32(A_fine.to_csr())
    else:
        A = _csr32(A_fine)
    if A.shape[0] != grid.n_unknowns:
        raise ConfigurationError("matrix order does not match grid")

    levels: list[_Level] = []
    n_dir = grid.n_interior
    coarsest = 3
    while A.shape[0] > coarsest:
        if n_dir % 2 == 0 or (n_dir - 1) // 2 < 1:
            raise ConfigurationError(
                f"per-direction size {n_dir} not coarsenable; use N = 2^k - 1"
            )
        P1 = _prolongation_1d(n_dir)
        P = P1 if grid.dimension == 1 else sp.kron(P1, P1, format="csr")
        red = _red_mask(n_dir) if grid.dimension == 2 else None
        levels.append(_Level(A=A, diag=A.diagonal(), P=_csr32(P), red=red))
        A = _csr32(P.T @ A @ P)
        n_dir = (n_dir - 1) // 2
    levels.append(_Level(A=A, diag=A.diagonal(), P=None, red=None,
                         dense=A.toarray()))
    return MultigridHierarchy(levels=levels, smoother=smoother_config,
                              dimension=grid.dimension)


def _smooth(level: _Level, cfg: SmootherConfig, b: np.ndarray, x: np.ndarray,
            steps: int) -> np.ndarray:
    for _ in range(steps):
        if cfg.kind == "damped-jacobi":
            r = b - level.A @ x
            x = x + cfg.omega * (r / level.diag)
        elif cfg.kind == "gauss-seidel":
            x = kernels.gs_sweep(level.A, b, x)
        else:
            red = level.red
            if red is None:
                # 1D lexicographic fallback keeps the option meaningful
                x = kernels.gs_sweep(level.A, b, x)
            else:
                x = kernels.rb_sweep(level.A, b, x, red)
    return x


def _vcycle_level(h: MultigridHierarchy, li: int, b: np.ndarray,
                  x: np.ndarray) -> np.ndarray:
    level = h.levels[li]
    if level.P is None:
        return np.linalg.solve(level.dense, b)
    cfg = h.smoother
    x = _smooth(level, cfg, b, x, cfg.pre_steps)
    r = b - level.A @ x
    x = x + level.P @ _vcycle_level(h, li + 1, level.P.T @ r,
                                    np.zeros(level.P.shape[1]))
    return _smooth(level, cfg, b, x, cfg.post_steps)


def vcycle(hierarchy: MultigridHierarchy, b: np.ndarray,
           x0: np.ndarray | None = None) -> np.ndarray:
    """One V-sweep from x0 (default zero)."""
    if x0 is None:
        x0 = np.zeros(len(b))
    return _vcycle_level(hierarchy, 0, np.ascontiguousarray(b, dtype=float),
                         np.ascontiguousarray(x0, dtype=float))


def mgm_solve(A, b, tol: float = 1e-7, max_iter: int = 100,
              hierarchy: MultigridHierarchy | None = None,
              grid: UniformGrid | None = None,
              smoother_config: SmootherConfig | None = None):
    """Stationary V-cycle iteration to the relative-residual tolerance.

    Either pass a prebuilt ``hierarchy`` or a ``grid`` to build one.
    Divergence (the sweep is not a contraction on every state the Newton
    iteration can visit) is detected and reported, not raised.
    """
    if hierarchy is None:
        if grid is None:
            raise ConfigurationError("mgm_solve needs a hierarchy or a grid")
        hierarchy = build_hierarchy(A, grid, smoother_config)
    Aop = LinearOperator.wrap(A)
    b = np.ascontiguousarray(b, dtype=float)
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return np.zeros(Aop.order), KrylovReport(0, [0.0], True, tol, 0.0)
    x = np.zeros(Aop.order)
    history = [1.0]
    k = 0
    for k in range(1, max_iter + 1):
        x = _vcycle_level(hierarchy, 0, b, x)
        rel = float(np.linalg.norm(b - Aop.apply(x)) / bn)
        history.append(rel)
        if not np.isfinite(rel) or rel > 1e8:
            # diverging stationary iteration; report honestly
            return x, KrylovReport(k, history, False, tol, rel)
        if rel <= tol:
            break
    return _finish(x, Aop, b, bn, history, tol, k)


def vcycle_preconditioner(hierarchy: MultigridHierarchy) -> Preconditioner:
    """One fixed V-sweep as a linear preconditioning operator."""
    return Preconditioner(
        lambda r: _vcycle_level(
            hierarchy, 0, np.ascontiguousarray(r, dtype=float),
            np.zeros(len(r)),
        ),
        descriptor="vcycle",
    )


def assemble_x_part(ctx: AssemblyContext, u: StateVector) -> StructuredMatrix:
    """X = I - (dt/h^2) L_D(u): the symmetric positive definite part of
    the Jacobian that the symmetric-part preconditioner inverts."""
    L = assemble_operator(ctx, u)
    X = L.scaled(-ctx.r)
    X.bands[0] = X.bands[0] + 1.0
    return X


def symmetric_part_preconditioner(ctx: AssemblyContext, u: StateVector,
                                  inner_tol: float = 1e-10,
                                  inner_max_iter: int = 400) -> Preconditioner:
    """Preconditioner M = X(u) = I - (dt/h^2) L_D(u).

    In 1D each application is an exact Thomas solve. In 2D it is an inner
    multigrid solve on X driven to ``inner_tol``; the default is tight so
    the map stays linear to solver precision and plain (non-flexible)
    GMRES remains sound. X is SPD with lambda_min >= 1, so the inner
    iteration is on safe ground.
    """
    X = assemble_x_part(ctx, u)
    if ctx.grid.dimension == 1:
        bands = X.tridiagonal_bands()

        def solve(r):
            return kernels.thomas(*bands, np.ascontiguousarray(r, dtype=float))

        return Preconditioner(solve, descriptor="symmetric-part")
    hierarchy = build_hierarchy(X, ctx.grid)
    Xop = LinearOperator.wrap(X)

    def solve(r):
        x, rep = mgm_solve(Xop, r, tol=inner_tol, max_iter=inner_max_iter,
                           hierarchy=hierarchy)
        return x

    return Preconditioner(solve, descriptor="symmetric-part")
