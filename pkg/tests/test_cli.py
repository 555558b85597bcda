import math
import shutil
from pathlib import Path

import pytest

from swarmsim.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """grid.nx = 8
grid.ny = 8
age.da = 0.125
solver.t_end = 0.5
initial.Q0_width = 0.3
initial.rho0_width = 0.3
output.csv = out.csv
output.snapshot_dir = snaps
"""


@pytest.fixture
def small_cfg(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def test_validate_clean(small_cfg, capsys):
    assert main(["validate", str(small_cfg)]) == 0
    assert capsys.readouterr().out == ""


def test_validate_lists_every_violation(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("coefficients.xi = 1.5\ncoefficients.d = 0\n")
    assert main(["validate", str(path)]) == 1
    out = capsys.readouterr().out.splitlines()
    assert "Hypxi: xi out of [0,1] (xi=1.5)" in out
    assert "HypD: d must be positive" in out


def test_run_writes_csv_and_is_repeatable(small_cfg, tmp_path, capsys):
    assert main(["run", str(small_cfg)]) == 0
    first = (tmp_path / "out.csv").read_bytes()
    assert first.splitlines()[0] == (b"t,rho_L1,Q_L1,rho_L2,Q_L2,biomass_residual,"
                                     b"min_rho,min_Q,picard_iters,cg_iters")
    assert len(first.splitlines()) == 1 + 5
    assert main(["run", str(small_cfg)]) == 0
    assert (tmp_path / "out.csv").read_bytes() == first
    assert main(["run", str(small_cfg), "--seed-check"]) == 0
    assert "determinism check passed" in capsys.readouterr().out


def test_run_picard_and_dump(small_cfg, tmp_path):
    assert main(["run", str(small_cfg), "--mode", "picard", "--dump-every", "2"]) == 0
    names = {p.name for p in (tmp_path / "snaps").iterdir()}
    assert {"rho_000000.bin", "Q_000002.bin", "M_000004.bin"} <= names
    rows = (tmp_path / "out.csv").read_text().splitlines()[1:]
    assert all(int(r.split(",")[8]) >= 1 for r in rows[1:])


def test_exit_codes(small_cfg, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense\n")
    assert main(["run", str(bad)]) == 1
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1
    trip = tmp_path / "trip.cfg"
    trip.write_text(SMALL + "solver.l2_factor = 1.01\n")
    assert main(["run", str(trip)]) == 2
    assert "L2 norm grew" in capsys.readouterr().err
    # the CSV still records the steps up to the failure
    assert len((tmp_path / "out.csv").read_text().splitlines()) >= 2


def test_convergence_transport_exact(capsys):
    assert main(["convergence", str(CONFIGS / "transport.cfg"), "--levels", "3"]) == 0
    out = capsys.readouterr().out
    orders = out.split("residual orders:")[1].splitlines()[0]
    assert all(math.isinf(float(o)) or float(o) >= 8 for o in orders.split(","))


def test_sweep(tmp_path, capsys):
    shutil.copy(CONFIGS / "reference.cfg", tmp_path)
    sweep = tmp_path / "s.sweep"
    sweep.write_text("sweep.base = reference.cfg\nsweep.output = out\n"
                     "axis.grid.nx = 8\naxis.grid.ny = 8\naxis.coefficients.xi = 0.25, 0.5\n"
                     "axis.solver.t_end = 0.25\n")
    assert main(["sweep", str(sweep)]) == 0
    manifest = (tmp_path / "out" / "manifest.csv").read_text().splitlines()
    assert manifest[0].startswith("point,grid.nx,grid.ny,coefficients.xi,solver.t_end,status")
    assert len(manifest) == 3 and all(",ok," in r for r in manifest[1:])
    assert (tmp_path / "out" / "point_001" / "report.csv").exists()


def test_sweep_rejects_bad_key(tmp_path):
    shutil.copy(CONFIGS / "reference.cfg", tmp_path)
    sweep = tmp_path / "s.sweep"
    sweep.write_text("sweep.base = reference.cfg\naxis.grid.nz = 3\n")
    assert main(["sweep", str(sweep)]) == 1


@pytest.mark.parametrize("name", ["reference", "model_a", "model_b", "transport"])
def test_shipped_configs_validate(name):
    assert main(["validate", str(CONFIGS / f"{name}.cfg")]) == 0
