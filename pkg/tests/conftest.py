import numpy as np
import pytest

from swarmsim.config import build, override, reference_config


def make_config(base=None, **assignments):
    """Reference config with ``section__key=value`` overrides (double underscore for the dot)."""
    cfg = base if base is not None else reference_config()
    return override(cfg, {k.replace("__", "."): str(v) for k, v in assignments.items()})


def small_config(**assignments):
    defaults = dict(grid__nx=8, grid__ny=8, age__da=0.125, solver__t_end=0.5,
                    initial__Q0_width=0.3, initial__rho0_width=0.3)
    defaults.update(assignments)
    return make_config(**defaults)


@pytest.fixture
def small():
    return build(small_config())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
