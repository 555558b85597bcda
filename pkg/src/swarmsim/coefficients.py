"""Coefficient functions of the swarm model and their admissibility checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MU_MODELS = ("zero", "constant", "tabulated")
XI_MODELS = ("constant", "logistic")
DIFFUSION_LAWS = ("esipov_shapiro", "mkk", "zero")
GAMMA_VARIANTS = ("ramp_shifted", "linear_shifted", "square", "one")


@dataclass(frozen=True)
class Thresholds:
    P_min: float = 0.18
    p_min: float = 0.2
    p_max: float = 1.0
    P_max: float = 1.05

    @property
    def ordered(self) -> bool:
        return self.P_min < self.p_min < self.p_max < self.P_max


@dataclass(frozen=True)
class DiffusionLaw:
    variant: str = "esipov_shapiro"
    D0bar: float = 1.0
    Q_sat: float = 1.0
    gamma: str = "ramp_shifted"
    k: float = 1.0


@dataclass(frozen=True)
class CoefficientSet:
    tau: float = 1.0
    d: float = 1e-3
    A: float = 1.0
    a_min: float = 0.25
    mu_model: str = "zero"
    mu_value: float = 0.0
    mu_table: tuple[tuple[float, float], ...] = ()
    xi_model: str = "constant"
    xi_value: float = 0.5
    xi_Q: float = 1.0
    diffusion: DiffusionLaw = field(default_factory=DiffusionLaw)
    thresholds: Thresholds = field(default_factory=Thresholds)


@dataclass(frozen=True)
class Violation:
    tag: str
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.tag}: {self.message}"


def chi(A: float) -> int:
    """Indicator of a finite maximal age."""
    return 1 if math.isfinite(A) else 0


def ramp_Hr(p):
    return np.clip(p, 0.0, 1.0)


def heaviside(p):
    # H(0) := 0 keeps the shifted ramp continuous at its kink
    return np.where(np.asarray(p) > 0, 1.0, 0.0)


def gamma(p, variant: str, shift: float):
    """Shape factor of the Esipov-Shapiro law; ``shift`` is ``P_min / P_max``."""
    p = np.asarray(p, dtype=float)
    if variant == "ramp_shifted":
        return (p - shift) * heaviside(p - shift)
    if variant == "linear_shifted":
        return p - shift
    if variant == "square":
        return p * p
    if variant == "one":
        return np.ones_like(p)
    raise ValueError(f"unknown gamma variant {variant!r}")


def eval_diffusion(law: DiffusionLaw, M, Q, P, thresholds: Thresholds):
    """Swarm diffusion ``D(M, Q, P) >= 0``, bounded by ``D0bar``.

    Inputs are clamped to the admissible box first: ``M`` to ``[0, 1]``,
    ``Q, P >= 0`` and ``P / P_max`` to ``[0, 1]``; a negative shape factor
    is cut to zero.
    """
    M = np.clip(M, 0.0, 1.0)
    Q = np.maximum(Q, 0.0)
    P = np.maximum(P, 0.0)
    if law.variant == "zero":
        return np.zeros(np.broadcast(M, Q, P).shape)
    if law.variant == "esipov_shapiro":
        p = np.minimum(P / thresholds.P_max, 1.0)
        g = np.maximum(gamma(p, law.gamma, thresholds.P_min / thresholds.P_max), 0.0)
        return law.D0bar * M * g * np.exp(-Q / law.Q_sat)
    if law.variant == "mkk":
        den = P + law.k * Q
        out = np.divide(law.D0bar * P, den, out=np.zeros(np.broadcast(P, den).shape), where=den > 0)
        return out
    raise ValueError(f"unknown diffusion law {law.variant!r}")


def eval_mu(cs: CoefficientSet, t: float, a) -> np.ndarray:
    """Death (dedifferentiation) rate at ages ``a``; presets are independent of ``t`` and ``x``."""
    a = np.asarray(a, dtype=float)
    if cs.mu_model == "zero":
        return np.zeros_like(a)
    if cs.mu_model == "constant":
        return np.full_like(a, cs.mu_value)
    if cs.mu_model == "tabulated":
        ages, vals = zip(*cs.mu_table)
        return np.interp(a, ages, vals)
    raise ValueError(f"unknown mu model {cs.mu_model!r}")


def mu_limit(cs: CoefficientSet) -> float:
    if cs.mu_model == "zero":
        return 0.0
    if cs.mu_model == "constant":
        return cs.mu_value
    return cs.mu_table[-1][1] if cs.mu_table else 0.0


def eval_xi(cs: CoefficientSet, t: float, Q):
    Q = np.asarray(Q, dtype=float)
    if cs.xi_model == "constant":
        return np.full_like(Q, min(max(cs.xi_value, 0.0), 1.0))
    if cs.xi_model == "logistic":
        return np.clip(cs.xi_value / (1.0 + np.maximum(Q, 0.0) / cs.xi_Q), 0.0, 1.0)
    raise ValueError(f"unknown xi model {cs.xi_model!r}")


def validate(cs: CoefficientSet) -> list[Violation]:
    """Every coefficient hypothesis that ``cs`` breaks; empty when admissible."""
    out = []
    if not cs.tau > 0:
        out.append(Violation("Model", "tau must be positive"))
    if not cs.d > 0:
        out.append(Violation("HypD", "d must be positive"))
    law = cs.diffusion
    if law.variant not in DIFFUSION_LAWS:
        out.append(Violation("HypD", f"unknown diffusion law {law.variant!r}"))
    else:
        if law.variant != "zero" and not law.D0bar >= 0:
            out.append(Violation("HypD", "D0bar must be nonnegative"))
        if law.variant == "esipov_shapiro":
            if law.gamma not in GAMMA_VARIANTS:
                out.append(Violation("HypD", f"unknown gamma variant {law.gamma!r}"))
            if not law.Q_sat > 0:
                out.append(Violation("HypD", "Q_sat must be positive"))
        if law.variant == "mkk" and not law.k > 0:
            out.append(Violation("HypD", "k must be positive"))

    if cs.xi_model not in XI_MODELS:
        out.append(Violation("Hypxi", f"unknown xi model {cs.xi_model!r}"))
    elif not 0 <= cs.xi_value <= 1:
        out.append(Violation("Hypxi", f"xi out of [0,1] (xi={cs.xi_value})"))
    elif cs.xi_model == "logistic" and not cs.xi_Q > 0:
        out.append(Violation("Hypxi", "logistic xi needs xi_Q > 0"))

    if cs.mu_model not in MU_MODELS:
        out.append(Violation("Hypmu", f"unknown mu model {cs.mu_model!r}"))
    elif cs.mu_model == "constant" and not cs.mu_value >= 0:
        out.append(Violation("Hypmu", "mu must be nonnegative"))
    elif cs.mu_model == "tabulated":
        ages = [a for a, _ in cs.mu_table]
        if not cs.mu_table:
            out.append(Violation("Hypmu", "tabulated mu needs at least one (age, value) pair"))
        elif any(v < 0 for _, v in cs.mu_table):
            out.append(Violation("Hypmu", "mu must be nonnegative"))
        elif any(b <= a for a, b in zip(ages, ages[1:])):
            out.append(Violation("Hypmu", "mu table ages must increase"))
    if not chi(cs.A) and cs.mu_model in MU_MODELS and not mu_limit(cs) > 0:
        out.append(Violation("Hypmu", "A = inf needs a positive limiting death rate mu_bar"))

    if not cs.A > 0:
        out.append(Violation("DefP", "A must be positive"))
    elif not 0 <= cs.a_min < cs.A:
        out.append(Violation("DefP", f"need 0 <= a_min < A (a_min={cs.a_min}, A={cs.A})"))

    if not cs.thresholds.ordered:
        th = cs.thresholds
        out.append(Violation("Defm", f"threshold order P_min < p_min < p_max < P_max violated "
                                     f"({th.P_min}, {th.p_min}, {th.p_max}, {th.P_max})"))
    return out


def initial_data_warnings(cs: CoefficientSet, rho0: np.ndarray, ages: np.ndarray,
                          dx: float, dy: float, b_warn: float = 1e6) -> list[Violation]:
    """Smallest constants ``b`` for the weighted initial-data ratios, flagged when large.

    Each ratio compares an ``exp(c a / tau)`` weighted moment (``c`` = 2 or 4)
    against the ``exp(a / tau)`` weighted one.
    """
    out = []
    tau = cs.tau
    area = dx * dy
    sq = (rho0 ** 2).sum(axis=(1, 2)) * area
    live = sq > 0
    if live.any():
        b1 = float(np.max(np.exp(ages[live] / tau)))
    else:
        b1 = 0.0
    gx = np.diff(rho0, axis=2) / dx
    gy = np.diff(rho0, axis=1) / dy
    g2 = (gx ** 2).sum(axis=(1, 2)) * area + (gy ** 2).sum(axis=(1, 2)) * area
    g4 = (gx ** 4).sum(axis=(1, 2)) * area + (gy ** 4).sum(axis=(1, 2)) * area
    bs = {"L2 age profile": b1}
    for name, g, c in (("gradient L4", g4, 4.0), ("gradient L2", g2, 2.0)):
        den = float(np.sum(g * np.exp(ages / tau)))
        num = float(np.sum(g * np.exp(c * ages / tau)))
        bs[name] = num / den if den > 0 else 0.0
    for name, b in bs.items():
        if not math.isfinite(b) or b > b_warn:
            out.append(Violation("Hyprho0", f"{name} ratio constant b={b:.3g} exceeds {b_warn:g}",
                                 severity="warning"))
    if not chi(cs.A) and np.any(rho0[-1] != 0):
        out.append(Violation("Hyprho0", "rho0 is nonzero at the truncation horizon", severity="warning"))
    return out
