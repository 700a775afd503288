"""Spatial discretization: the nonlinear operator, residual, and Jacobian.

On a uniform Dirichlet grid the diffusion term is discretized with the
3-point (1D) or 5-point (2D) stencil and arithmetic-mean edge
coefficients D_{k+1/2} = (D(u_k) + D(u_{k+1}))/2, giving

    F(u) = u - (dt/h^2) L_D(u) u - u_prev,
    F'(u) = X + Y,   X = I - (dt/h^2) L_D(u),
                     Y = -(dt/(2 h^2)) T(u) diag(D'(u_k)),

where T carries the stencil differences of the current state. Boundary
unknowns are eliminated; the implied zeros enter the edge coefficients
and the T rows adjacent to the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .problem import DiffusionLaw, StateVector, UniformGrid

__all__ = [
    "AssemblyError",
    "StructuredMatrix",
    "AssemblyContext",
    "midpoint_coefficients",
    "assemble_operator",
    "residual",
    "assemble_jacobian",
    "symmetric_part",
    "antisymmetric_part",
]

DENSE_GUARD = 2048  # dense conversion is for diagnostics, never the solve path


class AssemblyError(ValueError):
    pass


@dataclass
class StructuredMatrix:
    """Banded matrix stored by diagonals.

    ``bands[k]`` holds the entries A[i, i+k]; offsets are (0, +-1) for
    tridiagonal and (0, +-1, +-N) for the five-diagonal 2D operator in
    lexicographic ordering. ``grid_n`` is the per-direction interior
    size N.
    """

    kind: str
    order: int
    bands: dict[int, np.ndarray]
    grid_n: int

    def __post_init__(self):
        for off, band in self.bands.items():
            expect = self.order - abs(off)
            if band.shape != (expect,):
                raise AssemblyError(
                    f"band {off}: length {band.shape[0]}, expected {expect}"
                )

    @property
    def offsets(self) -> list[int]:
        return sorted(self.bands)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros(self.order)
        for off, band in self.bands.items():
            if off == 0:
                y += band * x
            elif off > 0:
                y[:-off] += band * x[off:]
            else:
                y[-off:] += band * x[:off]
        return y

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        return self.bands[0]

    def to_csr(self) -> sp.csr_matrix:
        offsets = self.offsets
        return sp.diags(
            [self.bands[k] for k in offsets], offsets, format="csr"
        )

    def to_dense(self, max_order: int = DENSE_GUARD) -> np.ndarray:
        if self.order > max_order:
            raise AssemblyError(
                f"dense conversion guarded at order {max_order}, got {self.order}"
            )
        A = np.zeros((self.order, self.order))
        for off, band in self.bands.items():
            idx = np.arange(band.shape[0])
            if off >= 0:
                A[idx, idx + off] = band
            else:
                A[idx - off, idx] = band
        return A

    def transpose(self) -> "StructuredMatrix":
        return StructuredMatrix(
            kind=self.kind,
            order=self.order,
            bands={-k: band.copy() for k, band in self.bands.items()},
            grid_n=self.grid_n,
        )

    def is_symmetric(self) -> bool:
        for off in self.offsets:
            other = self.bands.get(-off)
            if other is None:
                if np.any(self.bands[off] != 0.0):
                    return False
            elif not np.array_equal(self.bands[off], other):
                return False
        return True

    def tridiagonal_bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(dl, d, du) arrays sized for the Thomas kernel; dl[0] and
        du[-1] are padding."""
        if self.kind != "tridiagonal":
            raise AssemblyError("not a tridiagonal matrix")
        n = self.order
        dl = np.zeros(n)
        du = np.zeros(n)
        if n > 1:
            dl[1:] = self.bands.get(-1, np.zeros(n - 1))
            du[:-1] = self.bands.get(1, np.zeros(n - 1))
        return dl, self.bands[0].copy(), du

    def scaled(self, c: float) -> "StructuredMatrix":
        return StructuredMatrix(
            kind=self.kind,
            order=self.order,
            bands={k: c * band for k, band in self.bands.items()},
            grid_n=self.grid_n,
        )

    def add(self, other: "StructuredMatrix") -> "StructuredMatrix":
        if other.order != self.order:
            raise AssemblyError("order mismatch")
        bands = {k: band.copy() for k, band in self.bands.items()}
        for k, band in other.bands.items():
            if k in bands:
                bands[k] = bands[k] + band
            else:
                bands[k] = band.copy()
        return StructuredMatrix(self.kind, self.order, bands, self.grid_n)


@dataclass
class AssemblyContext:
    """Everything one implicit step needs: grid, law, dt, previous state."""

    grid: UniformGrid
    law: DiffusionLaw
    dt: float
    previous_state: StateVector

    def __post_init__(self):
        if self.dt < 0.0:
            raise AssemblyError("negative timestep")
        if self.previous_state.values.shape != (self.grid.n_unknowns,):
            raise AssemblyError("previous state does not match grid")

    @property
    def r(self) -> float:
        return self.dt / self.grid.h**2


def _check_finite(u: np.ndarray):
    if not np.all(np.isfinite(u)):
        raise AssemblyError("non-finite state entries")


def _padded_1d(u: np.ndarray) -> np.ndarray:
    g = np.zeros(u.shape[0] + 2)
    g[1:-1] = u
    return g


def _padded_2d(u: np.ndarray, n: int) -> np.ndarray:
    G = np.zeros((n + 2, n + 2))
    G[1:-1, 1:-1] = u.reshape(n, n, order="F")
    return G


def midpoint_coefficients(law: DiffusionLaw, u: StateVector, grid: UniformGrid):
    """Arithmetic-mean edge coefficients.

    1D: array of length N+1, entry j is the edge between nodes j and j+1
    of the padded grid (boundary zeros included). 2D: a pair
    (vertical, horizontal); vertical[i, j] sits between interior-padded
    nodes (i, j) and (i+1, j), shape (N+1, N); horizontal is the
    transpose-direction analogue, shape (N, N+1).
    """
    vals = u.values
    _check_finite(vals)
    if grid.dimension == 1:
        D = law.evaluate(_padded_1d(vals))
        return 0.5 * (D[1:] + D[:-1])
    n = grid.n_interior
    D = law.evaluate(_padded_2d(vals, n))
    vertical = 0.5 * (D[1:, 1:-1] + D[:-1, 1:-1])
    horizontal = 0.5 * (D[1:-1, 1:] + D[1:-1, :-1])
    return vertical, horizontal


def assemble_operator(ctx: AssemblyContext, u: StateVector) -> StructuredMatrix:
    """The diffusion operator L_D(u) (without the dt/h^2 scaling)."""
    grid = ctx.grid
    vals = u.values
    _check_finite(vals)
    if vals.shape != (grid.n_unknowns,):
        raise AssemblyError("state does not match grid")
    if grid.dimension == 1:
        Dm = midpoint_coefficients(ctx.law, u, grid)
        main = -(Dm[:-1] + Dm[1:])
        off = Dm[1:-1]
        return StructuredMatrix(
            "tridiagonal",
            grid.n_interior,
            {0: main, 1: off.copy(), -1: off.copy()},
            grid.n_interior,
        )
    n = grid.n_interior
    Dv, Dh = midpoint_coefficients(ctx.law, u, grid)
    east = Dv[1:, :]    # edge (i, j)-(i+1, j) seen from row (i, j)
    west = Dv[:-1, :]
    north = Dh[:, 1:]
    south = Dh[:, :-1]
    main = -(east + west + north + south).ravel(order="F")
    band_p1 = east.ravel(order="F")[:-1]
    band_p1[n - 1 :: n] = 0.0  # no east neighbour across the right boundary
    band_m1 = west.ravel(order="F")[1:]
    band_m1[n - 1 :: n] = 0.0
    band_pn = north.ravel(order="F")[: n * n - n]
    band_mn = south.ravel(order="F")[n:]
    return StructuredMatrix(
        "five-diagonal",
        n * n,
        {0: main, 1: band_p1, -1: band_m1, n: band_pn, -n: band_mn},
        n,
    )


def residual(ctx: AssemblyContext, u: StateVector) -> np.ndarray:
    """F(u) = u - (dt/h^2) L_D(u) u - u_prev, computed stencil-wise."""
    grid = ctx.grid
    vals = u.values
    _check_finite(vals)
    if vals.shape != ctx.previous_state.values.shape:
        raise AssemblyError("state size mismatch")
    r = ctx.r
    if grid.dimension == 1:
        g = _padded_1d(vals)
        Dm = midpoint_coefficients(ctx.law, u, grid)
        flux = Dm[:-1] * (g[:-2] - g[1:-1]) + Dm[1:] * (g[2:] - g[1:-1])
        return vals - r * flux - ctx.previous_state.values
    n = grid.n_interior
    G = _padded_2d(vals, n)
    Dv, Dh = midpoint_coefficients(ctx.law, u, grid)
    C = G[1:-1, 1:-1]
    flux = (
        Dv[1:, :] * (G[2:, 1:-1] - C)
        + Dv[:-1, :] * (G[:-2, 1:-1] - C)
        + Dh[:, 1:] * (G[1:-1, 2:] - C)
        + Dh[:, :-1] * (G[1:-1, :-2] - C)
    )
    return vals - r * flux.ravel(order="F") - ctx.previous_state.values


def assemble_jacobian(ctx: AssemblyContext, u: StateVector) -> StructuredMatrix:
    """Exact Jacobian F'(u) = X + Y as a banded matrix.

    The column scaling by D'(u_j) follows the state at the column index;
    with the clamped power law the derivative is the almost-everywhere
    one (zero where the law is flat), so F' is the exact gradient of
    ``residual`` away from the measure-zero kink at u = 0.
    """
    grid = ctx.grid
    vals = u.values
    _check_finite(vals)
    r = ctx.r
    if grid.dimension == 1:
        g = _padded_1d(vals)
        Dm = midpoint_coefficients(ctx.law, u, grid)
        Dp = ctx.law.derivative(g)
        if not np.all(np.isfinite(Dp)):
            raise AssemblyError("non-finite law derivative")
        c = -0.5 * r
        main = (
            1.0
            + r * (Dm[:-1] + Dm[1:])
            + c * (g[:-2] - 2.0 * g[1:-1] + g[2:]) * Dp[1:-1]
        )
        upper = -r * Dm[1:-1] + c * (g[2:-1] - g[1:-2]) * Dp[2:-1]
        lower = -r * Dm[1:-1] + c * (g[1:-2] - g[2:-1]) * Dp[1:-2]
        return StructuredMatrix(
            "tridiagonal",
            grid.n_interior,
            {0: main, 1: upper, -1: lower},
            grid.n_interior,
        )
    n = grid.n_interior
    G = _padded_2d(vals, n)
    Dv, Dh = midpoint_coefficients(ctx.law, u, grid)
    Dp = ctx.law.derivative(G)
    if not np.all(np.isfinite(Dp)):
        raise AssemblyError("non-finite law derivative")
    C = G[1:-1, 1:-1]
    dE = G[2:, 1:-1] - C
    dW = G[:-2, 1:-1] - C
    dN = G[1:-1, 2:] - C
    dS = G[1:-1, :-2] - C
    Dpc = Dp[1:-1, 1:-1]
    c = -0.5 * r
    east = Dv[1:, :]
    west = Dv[:-1, :]
    north = Dh[:, 1:]
    south = Dh[:, :-1]
    main = (
        1.0
        + r * (east + west + north + south)
        + c * (dE + dW + dN + dS) * Dpc
    ).ravel(order="F")
    p1 = (-r * east + c * dE * _shift_up(Dpc)).ravel(order="F")[:-1]
    p1[n - 1 :: n] = 0.0
    m1 = (-r * west + c * dW * _shift_down(Dpc)).ravel(order="F")[1:]
    m1[n - 1 :: n] = 0.0
    pn = (-r * north + c * dN * _shift_left(Dpc)).ravel(order="F")[: n * n - n]
    mn = (-r * south + c * dS * _shift_right(Dpc)).ravel(order="F")[n:]
    return StructuredMatrix(
        "five-diagonal",
        n * n,
        {0: main, 1: p1, -1: m1, n: pn, -n: mn},
        n,
    )


def _shift_up(A):
    # value of the (i+1, j) neighbour at position (i, j); boundary rows
    # are masked out of the band afterwards
    out = np.zeros_like(A)
    out[:-1, :] = A[1:, :]
    return out


def _shift_down(A):
    out = np.zeros_like(A)
    out[1:, :] = A[:-1, :]
    return out


def _shift_left(A):
    out = np.zeros_like(A)
    out[:, :-1] = A[:, 1:]
    return out


def _shift_right(A):
    out = np.zeros_like(A)
    out[:, 1:] = A[:, :-1]
    return out


def symmetric_part(A: StructuredMatrix) -> StructuredMatrix:
    bands = {}
    for off in A.offsets:
        other = A.bands.get(-off)
        if other is None:
            other = np.zeros_like(A.bands[off])
        bands[off] = 0.5 * (A.bands[off] + other)
    return StructuredMatrix(A.kind, A.order, bands, A.grid_n)


def antisymmetric_part(A: StructuredMatrix) -> StructuredMatrix:
    bands = {}
    for off in A.offsets:
        other = A.bands.get(-off)
        if other is None:
            other = np.zeros_like(A.bands[off])
        bands[off] = 0.5 * (A.bands[off] - other)
    return StructuredMatrix(A.kind, A.order, bands, A.grid_n)
