"""Pure NumPy/SciPy reference kernels.

These are the fallback implementations selected when the compiled
extension is unavailable (or DEGDIFF_PURE_PYTHON=1). Semantics are
bitwise-identical contracts, not just approximations: the test suite
runs both backends against each other.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp

__all__ = ["thomas", "gs_sweep", "rb_sweep"]


def thomas(dl: np.ndarray, d: np.ndarray, du: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve the tridiagonal system with bands (dl, d, du).

    ``dl[k]`` is entry (k, k-1) (dl[0] unused), ``du[k]`` is entry
    (k, k+1) (du[-1] unused). Delegates to LAPACK via solve_banded.
    """
    n = d.shape[0]
    if n == 1:
        if d[0] == 0.0:
            raise ZeroDivisionError("singular tridiagonal system")
        return np.asarray([b[0] / d[0]])
    ab = np.zeros((3, n))
    ab[0, 1:] = du[:-1]
    ab[1, :] = d
    ab[2, :-1] = dl[1:]
    try:
        return scipy.linalg.solve_banded((1, 1), ab, b)
    except np.linalg.LinAlgError as exc:
        # same exception type as the compiled recurrence
        raise ZeroDivisionError(str(exc)) from exc


def gs_sweep(A: sp.csr_matrix, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One forward lexicographic Gauss-Seidel sweep.

    Exactly (D + L) x_new = b - U x_old with L/U the strict triangles;
    matches the sequential row-by-row update of the compiled kernel.
    """
    upper = sp.triu(A, k=1, format="csr")
    lower = sp.tril(A, k=0, format="csr")
    rhs = b - upper @ x
    return sp.linalg.spsolve_triangular(lower, rhs, lower=True)


def rb_sweep(A: sp.csr_matrix, b: np.ndarray, x: np.ndarray, red: np.ndarray) -> np.ndarray:
    """One red-black sweep, red before black.

    Red rows update simultaneously from the incoming iterate; black rows
    update in index order, seeing the new red values and any earlier black
    updates. On five-point operators no two like-coloured rows couple, so
    this is classical red-black Gauss-Seidel; on Galerkin-coarsened
    nine-point operators the black half-sweep is Gauss-Seidel restricted
    to the black rows. The index-order black pass is reproduced here by a
    triangular solve on the black submatrix, keeping both backends
    bitwise-comparable in exact arithmetic.
    """
    diag = A.diagonal()
    mask = red.astype(bool)  # uint8 colour flags, not index positions
    x = x.copy()
    r = b - A @ x
    x[mask] += r[mask] / diag[mask]
    black = ~mask
    if np.any(black):
        # (D_bb + L_bb) dx_b = residual on black rows after the red pass
        r = b - A @ x
        lower_bb = sp.tril(A[black][:, black], k=0, format="csr")
        x[black] += sp.linalg.spsolve_triangular(lower_bb, r[black], lower=True)
    return x
