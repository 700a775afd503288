"""Continuous problem definitions.

Diffusion laws D(u), uniform Dirichlet grids in one and two dimensions,
grid-sampled states, and the Barenblatt reference solutions used to
initialise and verify runs of the porous medium equation

    du/dt = div(D(u) grad u),   D(u) = m u^(m-1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DiffusionLaw",
    "PowerLawDiffusion",
    "UniformGrid",
    "StateVector",
    "BarenblattSolution",
    "evaluate_barenblatt",
    "sample_on_grid",
]


@dataclass(frozen=True)
class DiffusionLaw:
    """A diffusion coefficient D and its derivative, both vectorised.

    ``evaluate`` must be nonnegative on the solution range; ``derivative``
    must be the pointwise derivative of ``evaluate`` wherever the law is
    differentiable (finite-difference consistency is part of the test
    suite's contract for any law plugged in here).
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


class PowerLawDiffusion(DiffusionLaw):
    """The porous-medium law D(u) = m u^(m-1).

    Negative arguments can appear transiently inside Newton iterations
    (undershoots near the moving support boundary). The law is clamped
    there: D(u) = m max(u,0)^(m-1) with derivative zero for u <= 0.
    The clamp keeps D >= 0 at every Newton iterate, which is what makes
    -L positive semidefinite and X = I - (dt/h^2)L satisfy
    lambda_min >= 1 unconditionally; on the physical range u >= 0 the
    clamped law is the textbook one. For m = 1 this is the heat
    equation, D identically 1.
    """

    def __init__(self, m: float):
        if m < 1.0:
            raise ValueError(f"power-law exponent must satisfy m >= 1, got {m}")
        self.m = float(m)
        super().__init__(self._eval, self._deriv, name=f"power-law(m={m:g})")

    def _eval(self, u):
        u = np.asarray(u, dtype=float)
        m = self.m
        if m == 1.0:
            return np.ones_like(u)
        return m * np.maximum(u, 0.0) ** (m - 1.0)

    def _deriv(self, u):
        u = np.asarray(u, dtype=float)
        m = self.m
        if m == 1.0:
            return np.zeros_like(u)
        if m == 2.0:
            return np.where(u > 0.0, 2.0, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = m * (m - 1.0) * np.maximum(u, 0.0) ** (m - 2.0)
        return np.where(u > 0.0, d, 0.0)


@dataclass(frozen=True)
class UniformGrid:
    """Uniform Dirichlet grid: N interior points per direction.

    1D: interval [a, b], nodes x_k = a + k h, k = 0..N+1, h = (b-a)/(N+1).
    2D: square [a, b]^2 with the same spacing in both directions; interior
    unknowns are stored in lexicographic order, u(i,j) at flat index
    i + N*(j-1) for 1-based (i, j).
    """

    dimension: int
    n_interior: int
    a: float = -10.0
    b: float = 10.0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.n_interior < 1:
            raise ValueError("need at least one interior point")
        if not self.b > self.a:
            raise ValueError("domain endpoints must satisfy a < b")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n_interior + 1)

    @property
    def n_unknowns(self) -> int:
        return self.n_interior ** self.dimension

    def interior_coordinates(self) -> np.ndarray:
        """1D: array of x_k. 2D: (n, 2) array in lexicographic order."""
        x = self.a + self.h * np.arange(1, self.n_interior + 1)
        if self.dimension == 1:
            return x
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X.ravel(order="F"), Y.ravel(order="F")])

    def flat_index(self, i: int, j: int) -> int:
        """Lexicographic flat position of 1-based (i, j), 0-based result."""
        n = self.n_interior
        if not (1 <= i <= n and 1 <= j <= n):
            raise IndexError(f"({i}, {j}) outside 1..{n}")
        return (i - 1) + n * (j - 1)

    def multi_index(self, k: int) -> tuple[int, int]:
        n = self.n_interior
        if not 0 <= k < n * n:
            raise IndexError(k)
        return k % n + 1, k // n + 1


@dataclass
class StateVector:
    """Interior solution values at one time, flat storage."""

    values: np.ndarray
    time: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("state storage is a flat vector")

    def as_square(self, grid: UniformGrid) -> np.ndarray:
        """2D view with axis 0 = i (x index), axis 1 = j (y index)."""
        n = grid.n_interior
        return self.values.reshape(n, n, order="F")


def _barenblatt_parameters(m: float, dimension: int) -> tuple[float, float, float]:
    # standard d-dimensional self-similar family with unit free constant;
    # the 1D printed form is this family at C = 1
    d = float(dimension)
    alpha = d / (d * (m - 1.0) + 2.0)
    beta = alpha / d
    kappa = alpha * (m - 1.0) / (2.0 * d * m)
    return alpha, beta, kappa


@dataclass(frozen=True)
class BarenblattSolution:
    """Self-similar source solution of the porous medium equation.

    u(t, x) = t^(-alpha) * (1 - kappa |x|^2 t^(-2 beta))_+^(1/(m-1))
    with alpha = d/(d(m-1)+2), beta = alpha/d, kappa = alpha(m-1)/(2dm).
    In 1D alpha reduces to 1/(m+1). Compactly supported, mass-conserving,
    singular at t = 0.
    """

    m: float
    dimension: int = 1

    def __post_init__(self):
        if self.m <= 1.0:
            raise ValueError("Barenblatt profile requires m > 1")
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")

    @property
    def alpha(self) -> float:
        return _barenblatt_parameters(self.m, self.dimension)[0]

    def __call__(self, t: float, x) -> np.ndarray:
        return evaluate_barenblatt(self.m, t, x, dimension=self.dimension)

    def support_radius(self, t: float) -> float:
        if t <= 0.0:
            raise ValueError("solution defined for t > 0 only")
        _, beta, kappa = _barenblatt_parameters(self.m, self.dimension)
        return np.sqrt(1.0 / kappa) * t**beta


def evaluate_barenblatt(m: float, t: float, x, dimension: int = 1) -> np.ndarray:
    """Pointwise Barenblatt value; ``x`` is scalar/array in 1D, or an
    (..., 2) coordinate array in 2D."""
    if t <= 0.0:
        raise ValueError("Barenblatt solution is singular at t <= 0")
    if m <= 1.0:
        raise ValueError("Barenblatt profile requires m > 1")
    alpha, beta, kappa = _barenblatt_parameters(m, dimension)
    if dimension == 1:
        r2 = np.asarray(x, dtype=float) ** 2
    else:
        xy = np.asarray(x, dtype=float)
        if xy.shape[-1] != 2:
            raise ValueError("2D evaluation expects coordinate pairs")
        r2 = np.sum(xy**2, axis=-1)
    bracket = 1.0 - kappa * r2 * t ** (-2.0 * beta)
    return t ** (-alpha) * np.maximum(bracket, 0.0) ** (1.0 / (m - 1.0))


def sample_on_grid(solution, grid: UniformGrid, t: float) -> StateVector:
    """Interior samples of an exact solution; boundary values are the
    implied homogeneous Dirichlet zeros and are not stored."""
    coords = grid.interior_coordinates()
    values = np.asarray(solution(t, coords), dtype=float)
    return StateVector(values=values.ravel(), time=float(t))
