"""Space and age lattices, field containers and the two stencil kernels.

Space is a rectangle ``[0, lx] x [0, ly]`` split into ``nx * ny`` cells whose
values live at cell centres.  Age is sampled at nodes ``a_k = k * da`` for
``k = 0 .. na`` so that both ends of the age interval are grid nodes; arrays
holding swarmers therefore have ``na + 1`` age levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpaceGrid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"space grid needs at least 3x3 cells, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("side lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two ``(ny, nx)`` arrays ``(x, y)``."""
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y)

    def refined(self, factor: int = 2) -> "SpaceGrid":
        return SpaceGrid(self.nx * factor, self.ny * factor, self.lx, self.ly)


@dataclass(frozen=True)
class AgeGrid:
    """Age nodes ``0, da, ..., na*da``.

    For a finite maximal age ``A`` the last node sits at ``A`` and must land
    there exactly (to rounding).  For ``A = inf`` the lattice is cut at a
    numerical horizon ``a_max_num = na * da``.
    """

    da: float
    na: int
    A: float = math.inf
    a_min: float = 0.0
    a_min_index: int = field(init=False)

    def __post_init__(self):
        if not self.da > 0:
            raise ValueError("age spacing must be positive")
        if self.na < 1:
            raise ValueError("need at least one age interval")
        if not 0 <= self.a_min < self.a_max_num:
            raise ValueError(f"a_min={self.a_min} outside [0, {self.a_max_num})")
        if math.isfinite(self.A) and abs(self.na * self.da - self.A) > 1e-12 * self.A:
            raise ValueError(f"da={self.da} does not divide A={self.A}")
        k = math.ceil(self.a_min / self.da - 1e-9)
        object.__setattr__(self, "a_min_index", k)

    @classmethod
    def for_max_age(cls, A: float, da: float, a_min: float = 0.0, horizon: float | None = None) -> "AgeGrid":
        """Build the lattice for a finite ``A`` or, when ``A`` is infinite, for ``horizon``."""
        if math.isfinite(A):
            na = round(A / da)
            if na < 1 or abs(na * da - A) > 1e-12 * A:
                raise ValueError(f"da={da} does not divide A={A}")
        else:
            if horizon is None or not horizon > 0:
                raise ValueError("an infinite maximal age needs a positive truncation horizon")
            na = math.ceil(horizon / da - 1e-9)
        return cls(da=da, na=na, A=A, a_min=a_min)

    @property
    def n_levels(self) -> int:
        return self.na + 1

    @property
    def a_max_num(self) -> float:
        return self.A if math.isfinite(self.A) else self.na * self.da

    @property
    def finite(self) -> bool:
        return math.isfinite(self.A)

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.n_levels) * self.da

    def refined(self, factor: int = 2) -> "AgeGrid":
        return AgeGrid(da=self.da / factor, na=self.na * factor, A=self.A, a_min=self.a_min)


@dataclass(frozen=True)
class ScalarField:
    """A ``(ny, nx)`` field tagged as ``Q``, ``P`` or ``M``."""

    values: np.ndarray
    dx: float
    dy: float
    role: str = "Q"

    def __post_init__(self):
        if self.role not in ("Q", "P", "M"):
            raise ValueError(f"unknown scalar role {self.role!r}")
        if np.ndim(self.values) != 2:
            raise ValueError("scalar field must be two dimensional")


@dataclass(frozen=True)
class SwarmerField:
    """Swarmer density on the ``(n_age, ny, nx)`` lattice."""

    values: np.ndarray
    da: float
    dx: float
    dy: float
    role: str = "rho"

    def __post_init__(self):
        if np.ndim(self.values) != 3:
            raise ValueError("swarmer field must be three dimensional")


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    if n > 1:
        w[0] = w[-1] = 0.5
    else:
        w[0] = 0.0
    return w


def weighted_age_integral(f: np.ndarray, ages: np.ndarray, da: float, weight_exponent: float,
                          lower_index: int = 0) -> np.ndarray:
    """Trapezoidal rule for ``int f(a) exp(weight_exponent * a) da`` from ``ages[lower_index]``.

    ``f`` has the age axis first.  Levels are accumulated one at a time from
    young to old so the result does not depend on how cells are batched.
    """
    n = f.shape[0]
    if not 0 <= lower_index < n:
        raise ValueError(f"lower_index {lower_index} outside [0, {n})")
    w = trapezoid_weights(n - lower_index) * da
    scale = np.exp(weight_exponent * ages[lower_index:])
    acc = np.zeros(f.shape[1:])
    for j, k in enumerate(range(lower_index, n)):
        acc += (w[j] * scale[j]) * f[k]
    return acc


def face_coefficients(coeff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Arithmetic means of ``coeff`` on interior x-faces ``(ny, nx-1)`` and y-faces ``(ny-1, nx)``."""
    cx = 0.5 * (coeff[:, 1:] + coeff[:, :-1])
    cy = 0.5 * (coeff[1:, :] + coeff[:-1, :])
    return cx, cy


def laplacian_variable_coeff(u: np.ndarray, coeff: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Discrete ``div(coeff grad u)`` with zero flux through the boundary.

    ``u`` may carry leading batch axes; ``coeff`` is a single ``(ny, nx)`` field.
    """
    cx, cy = face_coefficients(coeff)
    fx = cx * np.diff(u, axis=-1) / dx
    fy = cy * np.diff(u, axis=-2) / dy
    out = np.zeros(np.shape(u))
    out[..., :, :-1] += fx / dx
    out[..., :, 1:] -= fx / dx
    out[..., :-1, :] += fy / dy
    out[..., 1:, :] -= fy / dy
    return out
