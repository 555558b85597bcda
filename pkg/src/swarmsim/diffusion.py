"""Per-age diffusion solves for ``d rho/dt = div((D + d) grad rho)`` with zero-flux walls.

All age levels share one coefficient field within a step, so the implicit
matrix is built (and, for the direct solver, factored) once and reused.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import cg

from .grid import face_coefficients, laplacian_variable_coeff

SCHEMES = ("implicit", "explicit", "off")
LINEAR_SOLVERS = ("cholesky", "cg")


class DiffusionError(RuntimeError):
    pass


def explicit_limit(coeff_max: float, dx: float, dy: float) -> float:
    """Largest forward-Euler step keeping the update a convex combination."""
    return 1.0 / (coeff_max * (2.0 / dx ** 2 + 2.0 / dy ** 2))


def implicit_banded(coeff: np.ndarray, dt: float, dx: float, dy: float) -> np.ndarray:
    """``I - dt*L`` in LAPACK upper band storage, bandwidth ``nx``.

    Unknowns are numbered row-major, ``p = j*nx + i``.  The matrix is a
    symmetric M-matrix: positive diagonal, nonpositive off-diagonals, rows
    diagonally dominant.
    """
    ny, nx = coeff.shape
    cx, cy = face_coefficients(coeff)
    wx = dt * cx / dx ** 2
    wy = dt * cy / dy ** 2
    diag = np.ones((ny, nx))
    diag[:, :-1] += wx
    diag[:, 1:] += wx
    diag[:-1, :] += wy
    diag[1:, :] += wy
    ab = np.zeros((nx + 1, ny * nx))
    ab[nx] = diag.ravel()
    east = np.zeros((ny, nx))
    east[:, 1:] = -wx
    ab[nx - 1] = east.ravel()
    north = np.zeros((ny, nx))
    north[1:, :] = -wy
    ab[0] = north.ravel()
    return ab


def implicit_sparse(coeff: np.ndarray, dt: float, dx: float, dy: float) -> sp.csr_matrix:
    ny, nx = coeff.shape
    ab = implicit_banded(coeff, dt, dx, dy)
    n = nx * ny
    return sp.diags(
        [ab[0, nx:], ab[nx - 1, 1:], ab[nx], ab[nx - 1, 1:], ab[0, nx:]],
        [-nx, -1, 0, 1, nx], shape=(n, n), format="csr")


def _chunks(n: int, workers: int) -> list[slice]:
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).round().astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class DiffusionStep:
    """One backward-Euler (or forward-Euler) diffusion step for a stack of age levels.

    ``workers`` splits the stack into contiguous chunks handled by a thread
    pool.  Levels never interact, so the output does not depend on the split.
    """

    def __init__(self, coeff, dt, dx, dy, scheme="implicit", linear_solver="cholesky",
                 tol=1e-10, max_iter=1000, workers=1):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown diffusion scheme {scheme!r}")
        if linear_solver not in LINEAR_SOLVERS:
            raise ValueError(f"unknown linear solver {linear_solver!r}")
        self.coeff = np.asarray(coeff, dtype=float)
        self.dt, self.dx, self.dy = dt, dx, dy
        self.scheme = scheme
        self.linear_solver = linear_solver
        self.tol, self.max_iter = tol, max_iter
        self.workers = workers
        if scheme == "explicit":
            limit = explicit_limit(float(self.coeff.max()), dx, dy)
            if dt > limit:
                raise DiffusionError(f"explicit diffusion step dt={dt:g} exceeds stability limit {limit:g}")
        if scheme == "implicit":
            if linear_solver == "cholesky":
                self._factor = cholesky_banded(implicit_banded(self.coeff, dt, dx, dy),
                                               lower=False, check_finite=False)
            else:
                self._matrix = implicit_sparse(self.coeff, dt, dx, dy)
                self._jacobi = sp.diags(1.0 / self._matrix.diagonal())

    def __call__(self, levels: np.ndarray) -> tuple[np.ndarray, int]:
        """Diffuse ``levels`` of shape ``(m, ny, nx)``; returns the result and CG iterations."""
        levels = np.asarray(levels, dtype=float)
        if self.scheme == "off" or levels.shape[0] == 0:
            return levels.copy(), 0
        if self.scheme == "explicit":
            return levels + self.dt * laplacian_variable_coeff(levels, self.coeff, self.dx, self.dy), 0
        parts = _chunks(levels.shape[0], self.workers)
        if len(parts) == 1:
            results = [self._solve(levels)]
        else:
            with ThreadPoolExecutor(max_workers=len(parts)) as pool:
                results = list(pool.map(lambda s: self._solve(levels[s]), parts))
        out = np.concatenate([r[0] for r in results], axis=0)
        return out, sum(r[1] for r in results)

    def _solve(self, levels):
        m, ny, nx = levels.shape
        rhs = levels.reshape(m, ny * nx)
        if self.linear_solver == "cholesky":
            x = cho_solve_banded((self._factor, False), rhs.T, check_finite=False)
            return x.T.reshape(m, ny, nx), 0
        out = np.empty_like(rhs)
        total = 0
        for j in range(m):
            b = rhs[j]
            if not b.any():
                out[j] = 0.0
                continue
            count = [0]

            def tick(_):
                count[0] += 1

            x, info = cg(self._matrix, b, x0=b.copy(), rtol=self.tol, atol=0.0,
                         maxiter=self.max_iter, M=self._jacobi, callback=tick)
            if info != 0:
                res = np.linalg.norm(b - self._matrix @ x) / np.linalg.norm(b)
                raise DiffusionError(f"CG did not converge in {self.max_iter} iterations "
                                     f"(relative residual {res:.3e})")
            out[j] = x
            total += count[0]
        return out.reshape(m, ny, nx), total
