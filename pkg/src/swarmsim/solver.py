"""Time stepping for the swimmer/swarmer system.

One step of length ``dt`` (equal to the age spacing, so ageing is an index
shift) runs, in order:

1. memory update driven by the active biomass ``P`` at the start of the step;
2. diffusion coefficient ``D(M, Q, P) + d`` per cell;
3. ageing: every swarmer level moves up one node and decays by ``exp(-int mu)``;
4. swimmer update, exponential in the linear growth term with trapezoidal
   quadrature of the dedifferentiation sources;
5. renewal of the age-0 level from the new ``Q``;
6. implicit diffusion of every level above age 0.

Picard mode repeats 3-6 with the coefficient re-evaluated on the latest
iterate until successive iterates agree.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import chi, eval_diffusion, eval_mu, eval_xi
from .diagnostics import biomass_residual, compute_norms, state_difference
from .diffusion import DiffusionError, DiffusionStep
from .grid import ScalarField, SwarmerField, weighted_age_integral
from .hysteresis import initial_memory, memory_step
from .model import Problem, SystemState
from .snapshot import snapshot_write

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "rho_L1", "Q_L1", "rho_L2", "Q_L2", "biomass_residual",
               "min_rho", "min_Q", "picard_iters", "cg_iters")


class StepFailure(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class StepReport:
    t: float
    rho_L1: float
    Q_L1: float
    rho_L2: float
    Q_L2: float
    biomass_residual: float
    min_rho: float
    min_Q: float
    picard_iters: int
    cg_iters: int
    l2_ratio: float = 0.0

    def row(self) -> list[str]:
        return [repr(float(getattr(self, c))) if c not in ("picard_iters", "cg_iters")
                else str(getattr(self, c)) for c in CSV_COLUMNS]


@dataclass(frozen=True)
class StepInfo:
    picard_iters: int = 0
    cg_iters: int = 0
    picard_diffs: tuple[float, ...] = ()


@dataclass
class RunResult:
    reports: list[StepReport]
    state: SystemState
    sup_l2_ratio: float
    picard_diffs: list[tuple[float, ...]] = field(default_factory=list)


def active_biomass(problem: Problem, rho) -> np.ndarray:
    a = problem.age
    return weighted_age_integral(rho, a.ages, a.da, 1.0 / problem.coeffs.tau, a.a_min_index)


def initial_state(problem: Problem, rho0, Q0, M0=None) -> SystemState:
    """Assemble the state at ``t = 0``; ``M0`` defaults to a ramp compatible with ``P0``."""
    rho0 = np.asarray(rho0, dtype=float)
    Q0 = np.asarray(Q0, dtype=float)
    shape = (problem.age.n_levels, *problem.space.shape)
    if rho0.shape != shape or Q0.shape != shape[1:]:
        raise ValueError(f"initial data shapes {rho0.shape}, {Q0.shape} do not match grid {shape}")
    P0 = active_biomass(problem, rho0)
    if M0 is None:
        M0 = initial_memory(P0, problem.coeffs.thresholds)
    return SystemState(0.0, rho0, Q0, P0, np.asarray(M0, dtype=float))


def diffusion_coefficient(problem: Problem, M, Q, P) -> np.ndarray:
    cs = problem.coeffs
    return eval_diffusion(cs.diffusion, M, Q, P, cs.thresholds) + cs.d


def _sources(problem: Problem, rho, mu) -> np.ndarray:
    """Dedifferentiation into swimmers: the death-rate integral plus the outflow at age ``A``."""
    a = problem.age
    tau = problem.coeffs.tau
    s = weighted_age_integral(mu[:, None, None] * rho, a.ages, a.da, 1.0 / tau)
    if chi(a.A):
        s = s + rho[-1] * math.exp(a.ages[-1] / tau)
    return s


def age_shift(problem: Problem, rho, t: float) -> np.ndarray:
    """Move every level one node along ``a - t = const``, applying the death factor.

    Level 0 is left at zero for the renewal condition to fill; the top level
    leaves the lattice (it was accounted for as outflow at age ``A``).
    """
    h = problem.dt
    ages = problem.ages
    cs = problem.coeffs
    decay = np.exp(-0.5 * h * (eval_mu(cs, t, ages[:-1]) + eval_mu(cs, t + h, ages[1:])))
    out = np.zeros_like(rho)
    out[1:] = rho[:-1] * decay[:, None, None]
    return out


def step_Q(problem: Problem, state: SystemState, aged) -> tuple[np.ndarray, np.ndarray]:
    """New swimmer density and the differentiation fraction used for the step.

    ``Q' = e^{lam h} Q + h/2 (e^{lam h} S_old + S_new)`` with ``lam = (1 - xi)/tau``.
    ``S_new`` depends on the age-0 level, which the renewal condition ties to
    ``Q'``; that single linear term is solved for in closed form.
    """
    cs = problem.coeffs
    h = problem.dt
    t = state.t
    ages = problem.ages
    xi = eval_xi(cs, t, state.Q)
    growth = np.exp(h * (1.0 - xi) / cs.tau)
    s_old = _sources(problem, state.rho, eval_mu(cs, t, ages))
    mu_new = eval_mu(cs, t + h, ages)
    s_new = _sources(problem, aged, mu_new)
    renewal_gain = 0.5 * problem.age.da * mu_new[0] * xi / cs.tau
    den = 1.0 - 0.5 * h * renewal_gain
    if np.any(den <= 0):
        raise StepFailure(f"dt={h} too large for the age-0 death term (mu(0)*xi/tau)")
    Q_new = (growth * state.Q + 0.5 * h * (growth * s_old + s_new)) / den
    if np.any(Q_new < 0):
        raise StepFailure(f"negative swimmer density after Q step (min {Q_new.min():.3e}); reduce dt")
    return Q_new, xi


def step_rho(problem: Problem, aged, Q_new, xi, coeff) -> tuple[np.ndarray, int]:
    """Renewal at age 0 then diffusion of the older levels with coefficient ``coeff``."""
    s = problem.solver
    sp = problem.space
    diffuse = DiffusionStep(coeff, problem.dt, sp.dx, sp.dy, scheme=s.diffusion,
                            linear_solver=s.linear_solver, tol=s.cg_tol,
                            max_iter=s.cg_max_iter, workers=s.workers)
    rho = np.empty_like(aged)
    rho[0] = xi / problem.coeffs.tau * Q_new
    rho[1:], iters = diffuse(aged[1:])
    return rho, iters


def _linear_step(problem: Problem, state: SystemState, M_new, coeff) -> tuple[SystemState, int]:
    aged = age_shift(problem, state.rho, state.t)
    Q_new, xi = step_Q(problem, state, aged)
    try:
        rho_new, iters = step_rho(problem, aged, Q_new, xi, coeff)
    except DiffusionError as exc:
        raise StepFailure(str(exc)) from exc
    t_new = state.t + problem.dt
    return SystemState(t_new, rho_new, Q_new, active_biomass(problem, rho_new), M_new), iters


def advance_direct(problem: Problem, state: SystemState) -> tuple[SystemState, StepInfo]:
    M_new = memory_step(state.M, state.P, problem.dt, problem.coeffs.thresholds)
    coeff = diffusion_coefficient(problem, M_new, state.Q, state.P)
    new, iters = _linear_step(problem, state, M_new, coeff)
    return new, StepInfo(picard_iters=0, cg_iters=iters)


def advance_picard(problem: Problem, state: SystemState) -> tuple[SystemState, StepInfo]:
    """Fixed-point iteration on the diffusion coefficient within one step.

    Iterate ``k`` solves the now linear step with ``D`` frozen at the
    previous iterate's ``(Q, P)``; the first iterate is the direct step.  The
    loop ends when successive iterates are closer than ``picard_tol`` in the
    weighted L2 norm, or as soon as the refreshed coefficient is identical to
    the one just used, since the next iterate would then repeat this one.
    """
    cfg = problem.solver
    M_new = memory_step(state.M, state.P, problem.dt, problem.coeffs.thresholds)
    coeff = diffusion_coefficient(problem, M_new, state.Q, state.P)
    current, total_iters = _linear_step(problem, state, M_new, coeff)
    diffs = []
    for k in range(1, cfg.picard_max_iters + 1):
        next_coeff = diffusion_coefficient(problem, M_new, current.Q, current.P)
        if np.array_equal(next_coeff, coeff):
            return current, StepInfo(k, total_iters, tuple(diffs))
        if k == cfg.picard_max_iters:
            break
        coeff = next_coeff
        candidate, iters = _linear_step(problem, state, M_new, coeff)
        total_iters += iters
        diffs.append(state_difference(candidate, current, problem))
        current = candidate
        if diffs[-1] < cfg.picard_tol:
            return current, StepInfo(k + 1, total_iters, tuple(diffs))
    raise StepFailure(f"Picard iteration did not converge in {cfg.picard_max_iters} iterations "
                      f"(last difference {diffs[-1] if diffs else float('nan'):.3e})")


def make_report(problem: Problem, state: SystemState, total0: float, l2_0: float,
                info: StepInfo = StepInfo()) -> StepReport:
    norms = compute_norms(state, problem)
    residual, _ = biomass_residual(state.t, norms.rho_L1 + norms.Q_L1, total0, problem.coeffs.tau)
    l2 = norms.rho_L2 + norms.Q_L2
    if l2_0 > 0:
        ratio = l2 / l2_0
    else:
        ratio = 0.0 if l2 == 0 else math.inf
    return StepReport(
        t=state.t, rho_L1=norms.rho_L1, Q_L1=norms.Q_L1, rho_L2=norms.rho_L2, Q_L2=norms.Q_L2,
        biomass_residual=float(residual), min_rho=float(np.min(state.rho)),
        min_Q=float(np.min(state.Q)), picard_iters=info.picard_iters, cg_iters=info.cg_iters,
        l2_ratio=ratio)


def _check(report: StepReport, problem: Problem) -> None:
    values = [getattr(report, c) for c in CSV_COLUMNS]
    if not all(math.isfinite(v) for v in values):
        raise StepFailure(f"non-finite diagnostics at t={report.t}", report)
    if report.min_rho < 0 or report.min_Q < 0:
        raise StepFailure(f"negative density at t={report.t} "
                          f"(min_rho={report.min_rho:.3e}, min_Q={report.min_Q:.3e})", report)
    if report.l2_ratio > problem.solver.l2_factor:
        raise StepFailure(f"L2 norm grew by {report.l2_ratio:.3e} > factor {problem.solver.l2_factor:g} "
                          f"at t={report.t}", report)


def _dump(state: SystemState, problem: Problem, step: int, directory: Path, fields) -> None:
    sp, da = problem.space, problem.age.da
    for name in fields:
        if name == "rho":
            f = SwarmerField(np.array(state.rho), da=da, dx=sp.dx, dy=sp.dy)
        else:
            f = ScalarField(np.array(getattr(state, name)), dx=sp.dx, dy=sp.dy, role=name)
        snapshot_write(f, directory / f"{name}_{step:06d}.bin")


def run(problem: Problem, state: SystemState, *, snapshot_every: int = 0, snapshot_dir=None,
        fields=("rho", "Q", "P", "M"), on_report=None) -> RunResult:
    """Integrate from ``state`` to ``t_end``; one report per step, starting with the initial one.

    Any step failure (negative density, non-finite value, L2 tripwire,
    solver non-convergence) raises :class:`StepFailure` carrying the
    offending report when one exists.
    """
    advance = {"direct": advance_direct, "picard": advance_picard}.get(problem.solver.mode)
    if advance is None:
        raise ValueError(f"unknown solver mode {problem.solver.mode!r}")
    if snapshot_every and snapshot_dir is not None:
        snapshot_dir = Path(snapshot_dir)
        snapshot_dir.mkdir(parents=True, exist_ok=True)
        _dump(state, problem, 0, snapshot_dir, fields)

    norms0 = compute_norms(state, problem)
    total0 = norms0.rho_L1 + norms0.Q_L1
    l2_0 = norms0.rho_L2 + norms0.Q_L2
    report = make_report(problem, state, total0, l2_0)
    _check(report, problem)
    reports = [report]
    if on_report:
        on_report(report)
    sup_ratio = report.l2_ratio
    picard_diffs = []
    dt = problem.dt
    for n in range(problem.solver.n_steps):
        try:
            new, info = advance(problem, state)
        except StepFailure as exc:
            if exc.report is None:
                exc.report = reports[-1]
            raise
        # t from the step count, not by accumulation
        state = SystemState((n + 1) * dt, new.rho, new.Q, new.P, new.M)
        report = make_report(problem, state, total0, l2_0, info)
        sup_ratio = max(sup_ratio, report.l2_ratio)
        picard_diffs.append(info.picard_diffs)
        reports.append(report)
        if on_report:
            on_report(report)
        _check(report, problem)
        if snapshot_every and snapshot_dir is not None and (n + 1) % snapshot_every == 0:
            _dump(state, problem, n + 1, snapshot_dir, fields)
    log.info("run finished at t=%g, sup L2 ratio %.6g", state.t, sup_ratio)
    return RunResult(reports, state, sup_ratio, picard_diffs)
