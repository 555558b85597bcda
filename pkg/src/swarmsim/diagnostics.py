"""Biomass-weighted norms, a priori estimate monitors and refinement-order estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import weighted_age_integral
from .model import Problem, SystemState


@dataclass(frozen=True)
class NormSet:
    rho_L1: float
    rho_L2: float
    Q_L1: float
    Q_L2: float
    rho_L2_w2: float
    sup_rho: float
    sup_Q: float
    grad_rho_L2: float | None = None


def rho_norm(rho, problem: Problem, p: float = 1.0, weight: float = 1.0) -> float:
    """``(int int |rho|^p exp(weight * a / tau) dx da)^(1/p)`` by age trapezoid and cell sums."""
    a = problem.age
    inner = weighted_age_integral(np.abs(rho) ** p, a.ages, a.da, weight / problem.coeffs.tau)
    return float(np.sum(inner) * problem.space.cell_area) ** (1.0 / p)


def Q_norm(Q, problem: Problem, p: float = 1.0) -> float:
    return float(np.sum(np.abs(Q) ** p) * problem.space.cell_area) ** (1.0 / p)


def grad_rho_norm(rho, problem: Problem) -> float:
    s = problem.space
    gx2 = (np.diff(rho, axis=2) / s.dx) ** 2
    gy2 = (np.diff(rho, axis=1) / s.dy) ** 2
    per_level = np.zeros(rho.shape)
    per_level[:, :, :-1] += gx2
    per_level[:, :-1, :] += gy2
    return rho_norm(np.sqrt(per_level), problem, p=2.0)


def compute_norms(state: SystemState, problem: Problem, gradients: bool = False) -> NormSet:
    rho, Q = state.rho, state.Q
    return NormSet(
        rho_L1=rho_norm(rho, problem, 1.0),
        rho_L2=rho_norm(rho, problem, 2.0),
        Q_L1=Q_norm(Q, problem, 1.0),
        Q_L2=Q_norm(Q, problem, 2.0),
        rho_L2_w2=rho_norm(rho, problem, 2.0, weight=2.0),
        sup_rho=float(np.max(np.abs(rho))),
        sup_Q=float(np.max(np.abs(Q))),
        grad_rho_L2=grad_rho_norm(rho, problem) if gradients else None,
    )


def state_difference(a: SystemState, b: SystemState, problem: Problem) -> float:
    """Weighted L2 distance ``sqrt(||rho_a - rho_b||_2^2 + ||Q_a - Q_b||_2^2)``."""
    dr = rho_norm(np.asarray(a.rho) - b.rho, problem, 2.0)
    dq = Q_norm(np.asarray(a.Q) - b.Q, problem, 2.0)
    return math.hypot(dr, dq)


def biomass_residual(t, total, total0: float, tau: float):
    """Relative gap between the total biomass and ``total0 * exp(t / tau)``.

    Returns ``(residual, absolute)``; with zero initial biomass the gap is
    reported unscaled and ``absolute`` is True.
    """
    t = np.asarray(t, dtype=float)
    expected = total0 * np.exp(t / tau)
    gap = np.abs(np.asarray(total, dtype=float) - expected)
    if total0 > 0:
        return gap / expected, False
    return gap, True


def report_residuals(reports, tau: float):
    """``biomass_residual`` over a stream of step reports (first entry is the initial state)."""
    if not reports:
        raise ValueError("empty report stream")
    t = [r.t for r in reports]
    total = [r.rho_L1 + r.Q_L1 for r in reports]
    return biomass_residual(t, total, total[0], tau)


@dataclass(frozen=True)
class OrderEstimate:
    orders: tuple[float, ...]
    monotone: bool


def order_of_convergence(errors, ratio: float = 2.0, floor: float = 0.0) -> OrderEstimate:
    """Observed orders ``log(e_i / e_{i+1}) / log(ratio)`` between successive refinements.

    Errors at or below ``floor`` are treated as exact: a step whose finer
    error reaches the floor gets order ``inf``.  A growing error is flagged
    through ``monotone=False`` and yields a negative (or ``-inf``) order.
    """
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise ValueError("need at least two error values")
    if any(e < 0 or math.isnan(e) for e in errors):
        raise ValueError("errors must be nonnegative numbers")
    orders = []
    monotone = True
    for coarse, fine in zip(errors, errors[1:]):
        if fine <= floor:
            orders.append(math.inf)
        elif coarse <= floor:
            orders.append(-math.inf)
            monotone = False
        else:
            orders.append(math.log(coarse / fine) / math.log(ratio))
            if fine > coarse:
                monotone = False
    return OrderEstimate(tuple(orders), monotone)


def restrict_state(fine: SystemState, factor: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Map a refined ``(rho, Q)`` onto the coarse lattice: every other age node, block means in space."""
    rho = np.asarray(fine.rho)[::factor]
    n, ny, nx = rho.shape
    rho = rho.reshape(n, ny // factor, factor, nx // factor, factor).mean(axis=(2, 4))
    Q = np.asarray(fine.Q)
    Q = Q.reshape(ny // factor, factor, nx // factor, factor).mean(axis=(1, 3))
    return rho, Q
