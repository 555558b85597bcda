"""Problem definition and the state carried between time steps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientSet
from .grid import AgeGrid, SpaceGrid


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    mode: str = "direct"
    picard_tol: float = 1e-8
    picard_max_iters: int = 50
    diffusion: str = "implicit"
    linear_solver: str = "cholesky"
    cg_tol: float = 1e-10
    cg_max_iter: int = 1000
    l2_factor: float = 1e3
    workers: int = 1

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.dt)


@dataclass(frozen=True)
class Problem:
    space: SpaceGrid
    age: AgeGrid
    coeffs: CoefficientSet
    solver: SolverConfig

    def __post_init__(self):
        if self.solver.dt != self.age.da:
            raise ValueError(f"time step {self.solver.dt} must equal age step {self.age.da}")
        if not self.solver.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        n = self.solver.t_end / self.solver.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"t_end={self.solver.t_end} is not a multiple of dt={self.solver.dt}")
        if self.age.finite != math.isfinite(self.coeffs.A) or (
                self.age.finite and self.age.A != self.coeffs.A):
            raise ValueError("age grid and coefficients disagree on A")

    @property
    def dt(self) -> float:
        return self.solver.dt

    @property
    def ages(self) -> np.ndarray:
        return self.age.ages

    def with_solver(self, **changes) -> "Problem":
        from dataclasses import replace
        return replace(self, solver=replace(self.solver, **changes))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemState:
    """Fields at time ``t``; ``P`` is always the active biomass of ``rho``.

    Arrays are made read-only on construction so a published state can be
    shared freely.
    """

    t: float
    rho: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        for name in ("rho", "Q", "P", "M"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
