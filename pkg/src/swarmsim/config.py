"""Run configuration: a line-oriented ``section.key = value`` text format.

Blank lines and lines starting with ``#`` are ignored.  Every key must be
known; numbers are read as exact decimals before conversion so grid rules
such as "``da`` divides ``A``" are checked without binary rounding.
``age.A = inf`` selects an unbounded maximal age.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from .coefficients import (CoefficientSet, DiffusionLaw, Thresholds, Violation, initial_data_warnings,
                           validate as validate_coefficients)
from .diffusion import LINEAR_SOLVERS, SCHEMES, explicit_limit
from .grid import AgeGrid, SpaceGrid, SwarmerField, ScalarField
from .hysteresis import validate_m0
from .model import Problem, SolverConfig, SystemState
from .snapshot import SnapshotError, snapshot_read
from .solver import initial_state

MODEL_PRESETS = ("none", "model_a", "model_b")
DIFFUSION_PRESETS = ("none", "esipov_shapiro", "mkk")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = [str(p) for p in problems]
        super().__init__("; ".join(self.problems))


@dataclass
class PresetSection:
    model: str = "none"
    diffusion: str = "none"


@dataclass
class GridSection:
    nx: int = 32
    ny: int = 32
    lx: float = 1.0
    ly: float = 1.0


@dataclass
class AgeSection:
    A: float = 1.0
    da: float = 0.03125
    a_min: float = 0.25
    horizon: float = 0.0  # only for A = inf; 0 picks t_end + support of rho0


@dataclass
class CoefficientsSection:
    tau: float = 1.0
    d: float = 1e-3
    mu_model: str = "constant"
    mu: float = 0.5
    mu_table: str = ""  # "age:value, age:value, ..."
    abar: float = 0.0
    xi_model: str = "constant"
    xi: float = 0.5
    xi_Q: float = 1.0
    diffusion_law: str = "esipov_shapiro"
    D0bar: float = 1.0
    Q_sat: float = 1.0
    gamma: str = "ramp_shifted"
    k: float = 1.0
    P_min: float = 0.18
    p_min: float = 0.2
    p_max: float = 1.0
    P_max: float = 1.05


@dataclass
class SolverSection:
    t_end: float = 1.0
    dt: float = 0.0  # 0 means "equal to age.da"
    mode: str = "direct"
    diffusion: str = "implicit"
    linear_solver: str = "cholesky"
    cg_tol: float = 1e-10
    cg_max_iter: int = 1000
    picard_tol: float = 1e-8
    picard_max_iters: int = 50
    l2_factor: float = 1e3
    workers: int = 1


@dataclass
class InitialSection:
    Q0: str = "gaussian"
    Q0_amplitude: float = 2.0
    Q0_width: float = 0.15
    Q0_file: str = ""
    rho0: str = "gaussian"
    rho0_amplitude: float = 2.0
    rho0_width: float = 0.15
    rho0_age_center: float = 0.5
    rho0_age_width: float = 0.15
    rho0_file: str = ""
    M0: str = "auto"
    M0_file: str = ""


@dataclass
class OutputSection:
    csv: str = "report.csv"
    snapshot_dir: str = "snapshots"
    snapshot_every: int = 0
    fields: str = "rho,Q,P,M"


@dataclass
class RunConfig:
    """Parsed configuration.  The defaults are the reference problem."""

    preset: PresetSection = field(default_factory=PresetSection)
    grid: GridSection = field(default_factory=GridSection)
    age: AgeSection = field(default_factory=AgeSection)
    coefficients: CoefficientsSection = field(default_factory=CoefficientsSection)
    solver: SolverSection = field(default_factory=SolverSection)
    initial: InitialSection = field(default_factory=InitialSection)
    output: OutputSection = field(default_factory=OutputSection)


SECTIONS = tuple(f.name for f in fields(RunConfig))
# rho0 gaussians are cut this many age widths from their centre
AGE_CUTOFF = 6.0


def _convert(text: str, kind, where: str):
    text = text.strip()
    if kind is str:
        return text
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise ConfigError([f"{where}: {text!r} is not a number"]) from None
    if kind is int:
        if not value.is_finite() or value != value.to_integral_value():
            raise ConfigError([f"{where}: {text!r} is not an integer"])
        return int(value)
    if value.is_nan():
        raise ConfigError([f"{where}: NaN is not allowed"])
    return float(value)


def set_value(cfg: RunConfig, dotted: str, text: str, where: str = "") -> None:
    """Assign ``text`` to ``section.key`` with the type of the current value."""
    where = where or dotted
    section, _, key = dotted.partition(".")
    if section not in SECTIONS or not key:
        raise ConfigError([f"{where}: unknown key {dotted!r}"])
    sec = getattr(cfg, section)
    names = {f.name for f in fields(sec)}
    if key not in names:
        raise ConfigError([f"{where}: unknown key {dotted!r}"])
    setattr(sec, key, _convert(text, type(getattr(sec, key)), where))


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        key = key.strip()
        if not eq or not key or "." not in key or " " in key:
            raise ConfigError([f"line {lineno}: syntax error, expected 'section.key = value'"])
        yield lineno, key, value.strip()


def _apply_presets(cfg: RunConfig, explicit: set[str]) -> list[str]:
    errors = []
    c = cfg.coefficients
    model = cfg.preset.model
    if model not in MODEL_PRESETS:
        errors.append(f"preset.model must be one of {MODEL_PRESETS}")
    elif model == "model_a":
        if "coefficients.mu_model" in explicit and c.mu_model != "zero":
            errors.append("preset model_a requires coefficients.mu_model = zero")
        c.mu_model = "zero"
        if not math.isfinite(cfg.age.A):
            errors.append("preset model_a requires a finite age.A (the dedifferentiation age a_max)")
    elif model == "model_b":
        if "age.A" in explicit and math.isfinite(cfg.age.A):
            errors.append("preset model_b requires age.A = inf")
        cfg.age.A = math.inf
        if "coefficients.mu_model" in explicit and c.mu_model != "constant":
            errors.append("preset model_b requires coefficients.mu_model = constant")
        c.mu_model = "constant"
        if not c.abar > 0:
            errors.append("preset model_b requires coefficients.abar > 0")
        else:
            mu = 1.0 / c.abar
            if "coefficients.mu" in explicit and c.mu != mu:
                errors.append(f"preset model_b fixes coefficients.mu = 1/abar = {mu!r}")
            c.mu = mu
    law = cfg.preset.diffusion
    if law not in DIFFUSION_PRESETS:
        errors.append(f"preset.diffusion must be one of {DIFFUSION_PRESETS}")
    elif law != "none":
        if "coefficients.diffusion_law" in explicit and c.diffusion_law != law:
            errors.append(f"preset.diffusion = {law} conflicts with coefficients.diffusion_law")
        c.diffusion_law = law
    return errors


def parse_config(text: str, validate: bool = True) -> RunConfig:
    """Parse configuration text; raises :class:`ConfigError` listing every problem found."""
    cfg = RunConfig()
    errors = []
    explicit = set()
    seen = {}
    for lineno, key, value in _lines(text):
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r} (first on line {seen[key]})")
            continue
        seen[key] = lineno
        try:
            set_value(cfg, key, value, f"line {lineno}")
        except ConfigError as exc:
            errors.extend(exc.problems)
            continue
        explicit.add(key)
    if errors:
        raise ConfigError(errors)
    errors = _apply_presets(cfg, explicit)
    if errors:
        raise ConfigError(errors)
    if validate:
        violations = [v for v in validate_config(cfg) if v.severity == "error"]
        if violations:
            raise ConfigError(violations)
    return cfg


def load_config(path, validate: bool = True) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), validate=validate)


def _format(value) -> str:
    if isinstance(value, float):
        return "inf" if value == math.inf else repr(value)
    return str(value)


def _preset_keys(cfg: RunConfig) -> set[str]:
    keys = set()
    if cfg.preset.model == "model_a":
        keys |= {"coefficients.mu_model"}
    elif cfg.preset.model == "model_b":
        keys |= {"age.A", "coefficients.mu_model", "coefficients.mu"}
    if cfg.preset.diffusion not in ("", "none"):
        keys.add("coefficients.diffusion_law")
    return keys


def serialize_config(cfg: RunConfig) -> str:
    """Text form of ``cfg``; keys fixed by the active presets are left to the presets."""
    out = []
    derived = _preset_keys(cfg)
    for section in SECTIONS:
        sec = getattr(cfg, section)
        for f in fields(sec):
            if f"{section}.{f.name}" in derived:
                continue
            out.append(f"{section}.{f.name} = {_format(getattr(sec, f.name))}")
        out.append("")
    return "\n".join(out)


def _dec(x: float) -> Decimal:
    return Decimal(repr(float(x)))


def parse_mu_table(text: str) -> tuple[tuple[float, float], ...]:
    pairs = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        a, sep, v = item.partition(":")
        if not sep:
            raise ValueError(f"mu_table entry {item!r} is not 'age:value'")
        pairs.append((float(Decimal(a.strip())), float(Decimal(v.strip()))))
    return tuple(pairs)


def coefficient_set(cfg: RunConfig) -> CoefficientSet:
    c = cfg.coefficients
    return CoefficientSet(
        tau=c.tau, d=c.d, A=cfg.age.A, a_min=cfg.age.a_min,
        mu_model=c.mu_model, mu_value=c.mu, mu_table=parse_mu_table(c.mu_table),
        xi_model=c.xi_model, xi_value=c.xi, xi_Q=c.xi_Q,
        diffusion=DiffusionLaw(c.diffusion_law, c.D0bar, c.Q_sat, c.gamma, c.k),
        thresholds=Thresholds(c.P_min, c.p_min, c.p_max, c.P_max))


def validate_config(cfg: RunConfig) -> list[Violation]:
    """Every hypothesis or grid rule the configuration breaks, tagged by origin."""
    out = []
    g, a, s, ini = cfg.grid, cfg.age, cfg.solver, cfg.initial
    if g.nx < 3 or g.ny < 3:
        out.append(Violation("Grid", "nx and ny must be at least 3"))
    if not (g.lx > 0 and g.ly > 0):
        out.append(Violation("Grid", "lx and ly must be positive"))
    if not a.da > 0:
        out.append(Violation("Grid", "age.da must be positive"))
    else:
        if math.isfinite(a.A) and a.A > 0 and _dec(a.A) % _dec(a.da) != 0:
            out.append(Violation("Grid", f"age.da = {a.da!r} does not divide age.A = {a.A!r}"))
        if s.dt not in (0.0, a.da):
            out.append(Violation("Solver", f"solver.dt = {s.dt!r} must equal age.da = {a.da!r}"))
        if not s.t_end >= 0 or not math.isfinite(s.t_end):
            out.append(Violation("Solver", "solver.t_end must be finite and nonnegative"))
        elif _dec(s.t_end) % _dec(a.da) != 0:
            out.append(Violation("Solver", f"solver.t_end = {s.t_end!r} is not a multiple of dt = {a.da!r}"))
    if not math.isfinite(a.A) and a.horizon < 0:
        out.append(Violation("Grid", "age.horizon must be nonnegative"))
    if s.mode not in ("direct", "picard"):
        out.append(Violation("Solver", f"unknown solver.mode {s.mode!r}"))
    if s.diffusion not in SCHEMES:
        out.append(Violation("Solver", f"unknown solver.diffusion {s.diffusion!r}"))
    elif s.diffusion == "off":
        out.append(Violation("Solver", "diffusion disabled (test harness mode)", "warning"))
    if s.linear_solver not in LINEAR_SOLVERS:
        out.append(Violation("Solver", f"unknown solver.linear_solver {s.linear_solver!r}"))
    if not s.picard_tol > 0 or s.picard_max_iters < 1:
        out.append(Violation("Solver", "picard_tol must be positive and picard_max_iters >= 1"))
    if not s.cg_tol > 0 or s.cg_max_iter < 1:
        out.append(Violation("Solver", "cg_tol must be positive and cg_max_iter >= 1"))
    if not s.l2_factor > 0:
        out.append(Violation("Solver", "l2_factor must be positive"))
    if s.workers < 1:
        out.append(Violation("Solver", "workers must be at least 1"))

    try:
        cs = coefficient_set(cfg)
    except ValueError as exc:
        out.append(Violation("Hypmu", str(exc)))
    else:
        out.extend(validate_coefficients(cs))
        if (s.diffusion == "explicit" and a.da > 0 and g.lx > 0 and g.ly > 0 and g.nx > 0 and g.ny > 0):
            bound = (cs.diffusion.D0bar if cs.diffusion.variant != "zero" else 0.0) + cs.d
            limit = explicit_limit(bound, g.lx / g.nx, g.ly / g.ny) if bound > 0 else math.inf
            if a.da > limit:
                out.append(Violation("CFL", f"explicit diffusion needs dt <= {limit:.6g}, got {a.da!r}"))

    profiles = {"Q0": ("zero", "uniform", "gaussian", "file"), "rho0": ("zero", "gaussian", "file"),
                "M0": ("auto", "zero", "one", "file")}
    for name, allowed in profiles.items():
        kind = getattr(ini, name)
        if kind not in allowed:
            out.append(Violation("Initial", f"initial.{name} must be one of {allowed}"))
        elif kind == "file" and not Path(getattr(ini, f"{name}_file")).is_file():
            out.append(Violation("Initial", f"initial.{name}_file {getattr(ini, f'{name}_file')!r} not found"))
    for name in ("Q0_amplitude", "rho0_amplitude"):
        if not getattr(ini, name) >= 0:
            out.append(Violation("Initial", f"initial.{name} must be nonnegative"))
    for name in ("Q0_width", "rho0_width", "rho0_age_width"):
        if not getattr(ini, name) > 0:
            out.append(Violation("Initial", f"initial.{name} must be positive"))
    unknown = set(filter(None, cfg.output.fields.replace(" ", "").split(","))) - {"rho", "Q", "P", "M"}
    if unknown:
        out.append(Violation("Output", f"unknown snapshot fields {sorted(unknown)}"))
    if cfg.output.snapshot_every < 0:
        out.append(Violation("Output", "snapshot_every must be nonnegative"))
    return out


def _rho0_support(cfg: RunConfig) -> float:
    ini = cfg.initial
    if ini.rho0 == "gaussian" and ini.rho0_amplitude > 0:
        return ini.rho0_age_center + AGE_CUTOFF * ini.rho0_age_width
    return 0.0


def age_grid(cfg: RunConfig) -> AgeGrid:
    a = cfg.age
    if math.isfinite(a.A):
        return AgeGrid.for_max_age(a.A, a.da, a.a_min)
    horizon = a.horizon
    if cfg.initial.rho0 == "file":
        levels = snapshot_read(cfg.initial.rho0_file).values.shape[0]
        horizon = (levels - 1) * a.da
    elif horizon == 0:
        horizon = max(cfg.solver.t_end + _rho0_support(cfg), a.a_min + a.da, a.da)
    return AgeGrid.for_max_age(a.A, a.da, a.a_min, horizon=horizon)


def build_problem(cfg: RunConfig) -> Problem:
    violations = [v for v in validate_config(cfg) if v.severity == "error"]
    if violations:
        raise ConfigError(violations)
    s = cfg.solver
    solver = SolverConfig(
        dt=cfg.age.da, t_end=s.t_end, mode=s.mode, picard_tol=s.picard_tol,
        picard_max_iters=s.picard_max_iters, diffusion=s.diffusion, linear_solver=s.linear_solver,
        cg_tol=s.cg_tol, cg_max_iter=s.cg_max_iter, l2_factor=s.l2_factor, workers=s.workers)
    g = cfg.grid
    return Problem(SpaceGrid(g.nx, g.ny, g.lx, g.ly), age_grid(cfg), coefficient_set(cfg), solver)


def _read_field(path, shape, kind):
    try:
        f = snapshot_read(path)
    except (OSError, SnapshotError) as exc:
        raise ConfigError([f"Initial: cannot read {path}: {exc}"]) from exc
    if not isinstance(f, kind) or f.values.shape != shape:
        raise ConfigError([f"Initial: {path} holds shape {f.values.shape}, expected {shape}"])
    return f.values


def initial_fields(cfg: RunConfig, problem: Problem):
    """Build ``(rho0, Q0, M0)``; ``M0`` is None for the automatic choice."""
    ini = cfg.initial
    sp, ag = problem.space, problem.age
    x, y = sp.centers()
    r2 = (x - 0.5 * sp.lx) ** 2 + (y - 0.5 * sp.ly) ** 2
    shape = sp.shape
    if ini.Q0 == "zero":
        Q0 = np.zeros(shape)
    elif ini.Q0 == "uniform":
        Q0 = np.full(shape, ini.Q0_amplitude)
    elif ini.Q0 == "gaussian":
        Q0 = ini.Q0_amplitude * np.exp(-r2 / (2 * ini.Q0_width ** 2))
    else:
        Q0 = _read_field(ini.Q0_file, shape, ScalarField)

    rshape = (ag.n_levels, *shape)
    if ini.rho0 == "zero":
        rho0 = np.zeros(rshape)
    elif ini.rho0 == "gaussian":
        off = ag.ages - ini.rho0_age_center
        profile = np.where(np.abs(off) <= AGE_CUTOFF * ini.rho0_age_width,
                           np.exp(-off ** 2 / (2 * ini.rho0_age_width ** 2)), 0.0)
        spatial = np.exp(-r2 / (2 * ini.rho0_width ** 2))
        rho0 = ini.rho0_amplitude * profile[:, None, None] * spatial[None]
    else:
        rho0 = _read_field(ini.rho0_file, rshape, SwarmerField)

    if ini.M0 == "auto":
        M0 = None
    elif ini.M0 == "zero":
        M0 = np.zeros(shape)
    elif ini.M0 == "one":
        M0 = np.ones(shape)
    else:
        M0 = _read_field(ini.M0_file, shape, ScalarField)
    return rho0, Q0, M0


def initial_checks(cfg: RunConfig, problem: Problem, state: SystemState) -> list[Violation]:
    """Hypotheses on the initial data: sign, memory compatibility, weighted ratios."""
    out = []
    if np.any(state.rho < 0) or np.any(state.Q < 0):
        out.append(Violation("Initial", "rho0 and Q0 must be nonnegative"))
    if not (np.all(np.isfinite(state.rho)) and np.all(np.isfinite(state.Q))):
        out.append(Violation("Initial", "initial data must be finite"))
    out.extend(validate_m0(state.M, state.P, problem.coeffs.thresholds))
    out.extend(initial_data_warnings(problem.coeffs, np.asarray(state.rho), problem.ages,
                                     problem.space.dx, problem.space.dy))
    return out


def build(cfg: RunConfig) -> tuple[Problem, SystemState]:
    """Problem and initial state; raises :class:`ConfigError` on any violated hypothesis."""
    problem = build_problem(cfg)
    rho0, Q0, M0 = initial_fields(cfg, problem)
    state = initial_state(problem, rho0, Q0, M0)
    errors = [v for v in initial_checks(cfg, problem, state) if v.severity == "error"]
    if errors:
        raise ConfigError(errors)
    return problem, state


def refine(cfg: RunConfig, factor: int = 2) -> RunConfig:
    """Same problem with ``dt, da, dx, dy`` divided by ``factor``."""
    g, a, s = cfg.grid, cfg.age, cfg.solver
    return replace(cfg,
                   grid=replace(g, nx=g.nx * factor, ny=g.ny * factor),
                   age=replace(a, da=a.da / factor),
                   solver=replace(s, dt=s.dt / factor))


def override(cfg: RunConfig, assignments: dict[str, str]) -> RunConfig:
    """Copy of ``cfg`` with dotted-key overrides given as text, presets re-applied."""
    text = serialize_config(cfg)
    presets = PresetSection(assignments.get("preset.model", cfg.preset.model).strip(),
                            assignments.get("preset.diffusion", cfg.preset.diffusion).strip())
    # keys the new presets derive are left to them unless set explicitly
    drop = set(assignments) | _preset_keys(RunConfig(preset=presets))
    lines = [ln for ln in text.splitlines() if ln.split("=")[0].strip() not in drop]
    lines += [f"{k} = {v}" for k, v in assignments.items()]
    return parse_config("\n".join(lines))


def reference_config() -> RunConfig:
    """The reference problem used by the acceptance suite."""
    return RunConfig()
