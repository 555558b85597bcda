"""Parameter sweeps and refinement studies built on :func:`swarmsim.solver.run`."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, build, load_config, override, refine, serialize_config
from .diagnostics import Q_norm, order_of_convergence, report_residuals, restrict_state, rho_norm
from .solver import CSV_COLUMNS, StepFailure, run

MANIFEST_COLUMNS = ("point", "status", "t", "rho_L1", "Q_L1", "rho_L2", "Q_L2",
                    "max_biomass_residual", "sup_l2_ratio")


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def execute(cfg: RunConfig, csv_path=None, snapshot_every=None, snapshot_dir=None):
    """Build and run ``cfg``; returns ``(result, error, reports)``; one of result and error is None.

    The report CSV is written whether or not the run finishes, so a failed
    run leaves the steps up to and including the offending one.
    """
    problem, state = build(cfg)
    out = cfg.output
    every = out.snapshot_every if snapshot_every is None else snapshot_every
    fields = tuple(filter(None, out.fields.replace(" ", "").split(",")))
    reports = []
    result, error = None, None
    try:
        result = run(problem, state, snapshot_every=every,
                     snapshot_dir=snapshot_dir if snapshot_dir is not None else out.snapshot_dir,
                     fields=fields, on_report=reports.append)
    except StepFailure as exc:
        error = exc
    if csv_path:
        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        Path(csv_path).write_text(reports_csv(reports), encoding="utf-8")
    return result, error, reports


@dataclass
class SweepSpec:
    base: RunConfig
    axes: list[tuple[str, list[str]]]
    output: Path
    max_points: int = 256
    workers: int = 1

    def points(self) -> list[dict[str, str]]:
        keys = [k for k, _ in self.axes]
        return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in self.axes))]


def parse_sweep(text: str, base_dir=".") -> SweepSpec:
    """Sweep file: ``sweep.base``, ``sweep.output``, ``sweep.max_points``, ``sweep.workers``
    and one ``axis.<section>.<key> = v1, v2, ...`` line per swept key."""
    settings, axes = {}, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = (s.strip() for s in line.partition("="))
        if not eq:
            raise ValueError(f"line {lineno}: syntax error")
        if key.startswith("axis."):
            values = [v.strip() for v in value.split(",") if v.strip()]
            if not values:
                raise ValueError(f"line {lineno}: axis {key} has no values")
            axes.append((key[len("axis."):], values))
        elif key in ("sweep.base", "sweep.output", "sweep.max_points", "sweep.workers"):
            settings[key.split(".", 1)[1]] = value
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    if "base" not in settings:
        raise ValueError("sweep.base is required")
    base_dir = Path(base_dir)
    spec = SweepSpec(
        base=load_config(base_dir / settings["base"]),
        axes=axes,
        output=base_dir / settings.get("output", "sweep_out"),
        max_points=int(settings.get("max_points", 256)),
        workers=int(settings.get("workers", 1)),
    )
    n = math.prod(len(v) for _, v in axes)
    if n > spec.max_points:
        raise ValueError(f"sweep has {n} points, more than max_points={spec.max_points}")
    for point in spec.points():
        override(spec.base, point)  # every key must resolve and validate
    return spec


def _run_point(args):
    index, cfg_text, assignments, directory = args
    from .config import parse_config
    cfg = override(parse_config(cfg_text), assignments)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.cfg").write_text(serialize_config(cfg), encoding="utf-8")
    result, error, reports = execute(cfg, csv_path=directory / "report.csv", snapshot_every=0)
    last = reports[-1] if reports else None
    residual = float(np.max(report_residuals(reports, cfg.coefficients.tau)[0])) if reports else math.nan
    row = {"point": index, "status": "ok" if error is None else "failed"}
    row.update({k: assignments[k] for k in assignments})
    for name in ("t", "rho_L1", "Q_L1", "rho_L2", "Q_L2"):
        row[name] = repr(float(getattr(last, name))) if last else "nan"
    row["max_biomass_residual"] = repr(residual)
    row["sup_l2_ratio"] = repr(float(result.sup_l2_ratio)) if result else "nan"
    return row


def run_sweep(spec: SweepSpec) -> Path:
    """Run every point (one subdirectory each) and write ``manifest.csv``; returns its path."""
    spec.output.mkdir(parents=True, exist_ok=True)
    base_text = serialize_config(spec.base)
    jobs = [(i, base_text, point, str(spec.output / f"point_{i:03d}"))
            for i, point in enumerate(spec.points())]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    else:
        rows = [_run_point(j) for j in jobs]
    keys = [k for k, _ in spec.axes]
    columns = ["point", *keys, *MANIFEST_COLUMNS[1:]]
    path = spec.output / "manifest.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return path


@dataclass
class ConvergenceLevel:
    nx: int
    ny: int
    dt: float
    max_residual: float
    difference: float | None = None  # distance to the previous (coarser) level


@dataclass
class ConvergenceTable:
    levels: list[ConvergenceLevel] = field(default_factory=list)
    residual_orders: tuple[float, ...] = ()
    difference_orders: tuple[float, ...] = ()
    residual_monotone: bool = True
    difference_monotone: bool = True

    def format(self) -> str:
        lines = [f"{'level':>5} {'nx':>5} {'ny':>5} {'dt':>12} {'max_residual':>14} {'difference':>14}"]
        for i, lv in enumerate(self.levels):
            diff = "-" if lv.difference is None else f"{lv.difference:.6e}"
            lines.append(f"{i:>5} {lv.nx:>5} {lv.ny:>5} {lv.dt:>12.6g} {lv.max_residual:>14.6e} {diff:>14}")
        lines.append("residual orders:   " + ", ".join(f"{o:.3f}" for o in self.residual_orders)
                     + ("" if self.residual_monotone else "  (non-monotone)"))
        if self.difference_orders:
            lines.append("difference orders: " + ", ".join(f"{o:.3f}" for o in self.difference_orders)
                         + ("" if self.difference_monotone else "  (non-monotone)"))
        return "\n".join(lines)


# relative size below which an error is rounding noise
ROUNDING_FLOOR = 1e-13


def convergence_study(cfg: RunConfig, levels: int = 3) -> ConvergenceTable:
    """Run ``cfg`` at ``levels`` resolutions, halving ``dt, da, dx, dy`` each time.

    Reports the maximal biomass residual per level and the weighted L2
    distance between each level's final state, restricted to the previous
    level's lattice, and that previous state.
    """
    if levels < 2:
        raise ValueError("need at least two levels")
    table = ConvergenceTable()
    prev = None
    scale = 0.0
    for level in range(levels):
        current = cfg
        for _ in range(level):
            current = refine(current)
        problem, state = build(current)
        result = run(problem, state)
        residual = float(np.max(report_residuals(result.reports, current.coefficients.tau)[0]))
        entry = ConvergenceLevel(current.grid.nx, current.grid.ny, problem.dt, residual)
        if prev is not None:
            coarse_problem, coarse_state = prev
            rho_f, Q_f = restrict_state(result.state)
            entry.difference = math.hypot(rho_norm(rho_f - coarse_state.rho, coarse_problem, 2.0),
                                          Q_norm(Q_f - coarse_state.Q, coarse_problem, 2.0))
        else:
            scale = math.hypot(rho_norm(result.state.rho, problem, 2.0), Q_norm(result.state.Q, problem, 2.0))
        table.levels.append(entry)
        prev = (problem, result.state)
    est = order_of_convergence([lv.max_residual for lv in table.levels], floor=ROUNDING_FLOOR)
    table.residual_orders, table.residual_monotone = est.orders, est.monotone
    diffs = [lv.difference for lv in table.levels[1:]]
    if len(diffs) >= 2:
        est = order_of_convergence(diffs, floor=ROUNDING_FLOOR * max(scale, 1e-300))
        table.difference_orders, table.difference_monotone = est.orders, est.monotone
    return table
