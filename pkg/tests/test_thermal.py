import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from xbarnl import thermal
from xbarnl.thermal import SAPPHIRE, SILICON, ThermalNode


def test_steady_state_rises():
    assert thermal.steady_state_rise(100e-6, SAPPHIRE) == pytest.approx(0.370, abs=5e-4)
    assert thermal.steady_state_rise(100e-6, SILICON) == pytest.approx(0.917, abs=5e-4)
    assert thermal.steady_state_rise(0.0, SAPPHIRE) == 0


def test_step_response_landmarks():
    final = thermal.steady_state_rise(1e-3, SAPPHIRE)
    assert thermal.step_response(1e-3, SAPPHIRE, 0.0) == 0
    assert thermal.step_response(1e-3, SAPPHIRE, SAPPHIRE.tau) / final == pytest.approx(1 - np.exp(-1), abs=1e-9)
    assert SAPPHIRE.tau == pytest.approx(14e-6)
    assert thermal.step_response(1e-3, SAPPHIRE, 42e-6) / final == pytest.approx(1 - np.exp(-3), abs=1e-9)
    assert thermal.step_response(1e-3, SAPPHIRE, 42e-6) / final == pytest.approx(0.95, abs=2e-3)


def test_step_response_matches_ode():
    node = ThermalNode.from_tau(150e-6, 20e-6)
    p = 2e-3
    t = np.linspace(0, 100e-6, 30)
    sol = solve_ivp(lambda _, x: [(p - node.g * x[0]) / node.c], (0, t[-1]), [0.0], t_eval=t,
                    rtol=1e-11, atol=1e-14)
    assert np.allclose(thermal.step_response(p, node, t), sol.y[0], rtol=1e-7, atol=1e-12)


def test_envelope_transfer():
    assert thermal.envelope_transfer(SAPPHIRE, 0.0) == 1
    corner = 1 / (2 * np.pi * SAPPHIRE.tau)
    assert abs(thermal.envelope_transfer(SAPPHIRE, corner)) == pytest.approx(1 / np.sqrt(2))
    h = abs(thermal.envelope_transfer(SAPPHIRE, 1e6))
    assert h == pytest.approx(1 / np.sqrt(1 + (2 * np.pi * 14) ** 2), rel=1e-12)
    assert h == pytest.approx(0.01137, abs=1e-5)


@settings(max_examples=50, deadline=None)
@given(g=st.floats(1e-6, 1e-2), tau=st.floats(1e-7, 1e-3), f=st.floats(0, 1e8))
def test_envelope_is_a_passive_low_pass(g, tau, f):
    node = ThermalNode.from_tau(g, tau)
    h = thermal.envelope_transfer(node, f)
    assert abs(h) <= 1 + 1e-15
    assert h.imag <= 0


@settings(max_examples=50, deadline=None)
@given(p=st.floats(0, 1.0), t1=st.floats(0, 1e-3), t2=st.floats(0, 1e-3))
def test_step_response_monotone_and_bounded(p, t1, t2):
    a, b = sorted((t1, t2))
    ra = thermal.step_response(p, SILICON, a)
    rb = thermal.step_response(p, SILICON, b)
    assert ra <= rb + 1e-18 and rb <= thermal.steady_state_rise(p, SILICON) * (1 + 1e-15)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        ThermalNode(0.0, 1e-9)
    with pytest.raises(ValueError):
        thermal.steady_state_rise(-1.0, SAPPHIRE)
    with pytest.raises(ValueError):
        thermal.step_response(1.0, SAPPHIRE, -1e-6)
    with pytest.raises(ValueError):
        thermal.envelope_transfer(SAPPHIRE, -1.0)


def test_step_converges_by_twenty_tau():
    final = thermal.steady_state_rise(1e-3, SILICON)
    assert abs(thermal.step_response(1e-3, SILICON, 20 * SILICON.tau) / final - 1) < 1e-6


@settings(max_examples=50, deadline=None)
@given(p=st.one_of(st.just(0.0), st.floats(1e-300, 1.0)), a=st.sampled_from([0.5, 2.0, 4.0, 0.25]))
def test_steady_rise_is_linear(p, a):
    assert thermal.steady_state_rise(a * p, SAPPHIRE) == a * thermal.steady_state_rise(p, SAPPHIRE)


def test_envelope_monotone_with_bounded_phase():
    f = np.logspace(0, 9, 400)
    h = thermal.envelope_transfer(SILICON, f)
    assert np.all(np.diff(np.abs(h)) < 0)
    ph = np.degrees(np.angle(h))
    assert np.all((ph > -90) & (ph <= 0))
