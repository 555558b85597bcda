import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmsim.coefficients import Thresholds
from swarmsim.hysteresis import initial_memory, memory_rhs, memory_step, relay_step, validate_m0

TH = Thresholds()


def test_rhs_signs():
    assert memory_rhs(0.5, 2.0, TH) == pytest.approx(1 / (TH.P_max - TH.p_max) * 0.5)
    assert memory_rhs(0.5, 0.0, TH) == pytest.approx(-1 / (TH.p_min - TH.P_min) * 0.5)
    assert memory_rhs(0.5, 0.5, TH) == 0.0


def test_held_high_closed_form():
    gap = TH.P_max - TH.p_max
    M, dt = 0.0, 1e-3
    for n in range(1, 301):
        M = memory_step(M, 5.0, dt, TH)
        assert abs(M - (1 - math.exp(-n * dt / gap))) < 1e-12


def test_held_low_closed_form():
    gap = TH.p_min - TH.P_min
    M, dt = 1.0, 1e-3
    for n in range(1, 301):
        M = memory_step(M, 0.0, dt, TH)
        assert abs(M - math.exp(-n * dt / gap)) < 1e-12


def test_partial_ramp_rate():
    # P between p_max and P_max switches the ramp on partially
    P = TH.p_max + 0.25 * (TH.P_max - TH.p_max)
    rate = 0.25 / (TH.P_max - TH.p_max)
    assert memory_step(0.2, P, 0.1, TH) == pytest.approx(1 - 0.8 * math.exp(-rate * 0.1), rel=1e-14)


def test_dead_band_holds():
    M = np.array([0.0, 0.3, 1.0])
    np.testing.assert_array_equal(memory_step(M, np.full(3, 0.5), 0.7, TH), M)


@settings(max_examples=200, deadline=None)
@given(M=st.floats(0, 1), P=st.floats(0, 10), dt=st.floats(1e-6, 100))
def test_memory_stays_in_unit_interval(M, P, dt):
    out = float(memory_step(M, P, dt, TH))
    assert 0.0 <= out <= 1.0


def test_relay():
    s = relay_step(np.array([0, 1, 0, 1]), np.array([2.0, 0.0, 0.5, 0.5]), TH)
    np.testing.assert_array_equal(s, [1, 0, 0, 1])
    assert s.dtype == np.int8


def test_initial_memory_compatible():
    P0 = np.linspace(0, 2, 41)
    M0 = initial_memory(P0, TH)
    assert validate_m0(M0, P0, TH) == []
    assert M0[0] == 0 and M0[-1] == 1


def test_validate_m0_flags():
    P0 = np.array([0.0, 2.0, 0.5])
    tags = validate_m0(np.array([0.5, 0.5, 1.5]), P0, TH)
    assert len(tags) == 3 and all(v.tag == "Hypm0" for v in tags)


def test_rhs_examples():
    assert memory_rhs(0.0, TH.P_max, TH) == pytest.approx(1 / (TH.P_max - TH.p_max))
    assert memory_rhs(0.0, 3 * TH.P_max, TH) == pytest.approx(1 / (TH.P_max - TH.p_max))
    assert memory_rhs(1.0, TH.P_max, TH) == 0.0
    assert memory_rhs(0.4, 0.5 * (TH.p_min + TH.p_max), TH) == 0.0


def test_relay_examples():
    assert relay_step(0, TH.P_max + 0.01, TH) == 1
    assert relay_step(1, 0.5 * (TH.P_min + TH.P_max), TH) == 1
    assert relay_step(0, 0.5 * (TH.P_min + TH.P_max), TH) == 0


def test_m0_examples():
    assert validate_m0(np.zeros(4), np.zeros(4), TH) == []
    assert validate_m0(np.array([0.5]), np.array([TH.P_max + 1]), TH)[0].tag == "Hypm0"
    assert "outside [0,1]" in validate_m0(np.array([1.5]), np.array([0.5]), TH)[0].message
