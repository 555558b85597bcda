"""Memory field M: the ramp-regularised switching ODE and the ideal relay it smooths."""

from __future__ import annotations

import numpy as np

from .coefficients import Thresholds, Violation, ramp_Hr


def _rates(P, th: Thresholds):
    up_gap = th.P_max - th.p_max
    down_gap = th.p_min - th.P_min
    up = ramp_Hr((P - th.p_max) / up_gap) / up_gap
    down = ramp_Hr((th.p_min - P) / down_gap) / down_gap
    return up, down


def memory_rhs(M, P, th: Thresholds):
    """Right-hand side ``dM/dt`` of the regularised relay."""
    up, down = _rates(np.asarray(P, dtype=float), th)
    return up * ramp_Hr(1.0 - M) - down * ramp_Hr(M)


def memory_step(M, P, dt: float, th: Thresholds):
    """Advance ``M`` by ``dt`` with ``P`` frozen at its value at the start of the step.

    On ``[0, 1]`` the ODE is linear in ``M`` once ``P`` is fixed, and the two
    rates are never active together (one needs ``P > p_max``, the other
    ``P < p_min``), so each cell is integrated exactly.  The result stays in
    ``[0, 1]`` without clamping.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    M = np.asarray(M, dtype=float)
    up, down = _rates(np.asarray(P, dtype=float), th)
    rising = 1.0 - (1.0 - M) * np.exp(-up * dt)
    falling = M * np.exp(-down * dt)
    return np.where(up > 0, rising, np.where(down > 0, falling, M))


def relay_step(state, P, th: Thresholds):
    """Ideal relay: on at ``P >= P_max``, off at ``P <= P_min``, unchanged in between."""
    P = np.asarray(P, dtype=float)
    return np.where(P >= th.P_max, 1, np.where(P <= th.P_min, 0, state)).astype(np.int8)


def initial_memory(P0, th: Thresholds):
    """A smooth ``M0`` compatible with ``P0``: 0 below ``P_min``, 1 above ``P_max``."""
    return ramp_Hr((np.asarray(P0, dtype=float) - th.P_min) / (th.P_max - th.P_min))


def validate_m0(M0, P0, th: Thresholds) -> list[Violation]:
    M0 = np.asarray(M0, dtype=float)
    P0 = np.asarray(P0, dtype=float)
    out = []
    bad_range = (M0 < 0) | (M0 > 1) | ~np.isfinite(M0)
    if bad_range.any():
        out.append(Violation("Hypm0", f"M0 outside [0,1] in {int(bad_range.sum())} cells"))
    low = (P0 < th.P_min) & (M0 != 0)
    if low.any():
        out.append(Violation("Hypm0", f"M0 must be 0 where P0 < P_min ({int(low.sum())} cells)"))
    high = (P0 > th.P_max) & (M0 != 1)
    if high.any():
        out.append(Violation("Hypm0", f"M0 must be 1 where P0 > P_max ({int(high.sum())} cells)"))
    return out
