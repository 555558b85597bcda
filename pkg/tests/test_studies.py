import math

import pytest

from swarmsim.config import reference_config, serialize_config
from swarmsim.studies import convergence_study, execute, parse_sweep, reports_csv, run_sweep

from conftest import small_config


@pytest.fixture
def base_dir(tmp_path):
    (tmp_path / "base.cfg").write_text(serialize_config(small_config(solver__t_end=0.25)))
    return tmp_path


def test_parse_sweep_product(base_dir):
    spec = parse_sweep("sweep.base = base.cfg\naxis.coefficients.xi = 0.1, 0.2, 0.3\n"
                       "axis.coefficients.d = 1e-3, 1e-2\nsweep.max_points = 6\n", base_dir)
    assert len(spec.points()) == 6
    assert spec.points()[1] == {"coefficients.xi": "0.1", "coefficients.d": "1e-2"}


def test_parse_sweep_errors(base_dir):
    with pytest.raises(ValueError, match="more than max_points"):
        parse_sweep("sweep.base = base.cfg\nsweep.max_points = 2\naxis.grid.nx = 4, 5, 6\n", base_dir)
    with pytest.raises(ValueError, match="required"):
        parse_sweep("axis.grid.nx = 4\n", base_dir)
    with pytest.raises(ValueError, match="unknown key"):
        parse_sweep("sweep.base = base.cfg\nsweep.colour = red\n", base_dir)
    with pytest.raises(ValueError, match="no values"):
        parse_sweep("sweep.base = base.cfg\naxis.grid.nx = \n", base_dir)
    with pytest.raises(ValueError):
        parse_sweep("sweep.base = base.cfg\naxis.coefficients.xi = 2\n", base_dir)


def test_parallel_sweep_matches_sequential(base_dir):
    text = "sweep.base = base.cfg\naxis.coefficients.xi = 0.2, 0.4\n"
    seq = parse_sweep(text + "sweep.output = seq\n", base_dir)
    par = parse_sweep(text + "sweep.output = par\nsweep.workers = 2\n", base_dir)
    a = run_sweep(seq).read_bytes()
    b = run_sweep(par).read_bytes()
    assert a == b
    assert (base_dir / "par" / "point_001" / "report.csv").read_bytes() == \
        (base_dir / "seq" / "point_001" / "report.csv").read_bytes()


def test_execute_records_failure(tmp_path):
    result, error, reports = execute(small_config(solver__l2_factor=1.01), csv_path=tmp_path / "r.csv")
    assert result is None and error is not None
    assert (tmp_path / "r.csv").read_text() == reports_csv(reports)


def test_convergence_study_reference_shape():
    table = convergence_study(small_config(solver__t_end=0.25), levels=3)
    assert [lv.nx for lv in table.levels] == [8, 16, 32]
    assert table.levels[0].difference is None
    assert len(table.residual_orders) == 2 and len(table.difference_orders) == 1
    assert all(math.isfinite(o) for o in table.residual_orders)
    assert "residual orders" in table.format()
    with pytest.raises(ValueError):
        convergence_study(reference_config(), levels=1)
