import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from stochcollapse.free_mass import (FreeMassMoments, energy_growth_free, evolve_free_moments,
                                     free_generating_exponent, free_generating_function,
                                     free_moment_rhs, free_moment_shifts, free_moment_table,
                                     minimum_uncertainty_moments)
from stochcollapse.model import OscillatorModel
from stochcollapse.oracles import decoherence_shifts
from stochcollapse.oracles import TruncatedSeries


def test_zero_time_returns_initial():
    ini = FreeMassMoments(0.0, 0.1, 0.2, 0.5, 0.6, 0.05)
    assert evolve_free_moments(2.0, 0.3, ini, 0.0) == ini


def test_unit_shifts():
    ini = minimum_uncertainty_moments(1.0)
    eta0 = evolve_free_moments(1.0, 0.0, ini, 1.0)
    eta1 = evolve_free_moments(1.0, 1.0, ini, 1.0)
    assert eta1.p2 - eta0.p2 == pytest.approx(1.0)
    assert eta1.qp_sym - eta0.qp_sym == pytest.approx(1.0)
    assert eta1.q2 - eta0.q2 == pytest.approx(1 / 3)
    assert free_moment_shifts(1.0, 1.0, 1.0) == pytest.approx({"p2": 1.0, "qp_sym": 1.0, "q2": 1 / 3})


@given(st.floats(0.2, 5.0), st.floats(0.0, 3.0),
       st.tuples(*[st.floats(-1, 1)] * 3))
@settings(max_examples=20, deadline=None)
def test_closed_form_matches_moment_ode(mass, eta, firsts):
    ini = FreeMassMoments(0.0, firsts[0], firsts[1], 0.5 + firsts[0] ** 2, 0.5 + firsts[1] ** 2, firsts[2])
    for t in (0.5, 3.0, 10.0):
        sol = solve_ivp(lambda s, y: free_moment_rhs(mass, eta, y), (0, t), ini.as_array(),
                        method="DOP853", rtol=1e-13, atol=1e-13)
        ref = sol.y[:, -1]
        got = evolve_free_moments(mass, eta, ini, t).as_array()
        assert np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))) < 1e-10


def test_uncertainty_preserved():
    ini = minimum_uncertainty_moments(1.3)
    for m in free_moment_table(1.3, 0.4, ini, np.linspace(0, 5, 11)):
        assert m.uncertainty_ok()
        assert m.var_q >= 0 and m.var_p >= 0


def test_generating_function_trivial():
    assert free_generating_function(1.0, 0.5, 0.0, 0.0, 2.0) == 1.0
    K0f = lambda a, b: np.exp(0.1 * a - 0.2 * b)  # noqa: E731
    assert free_generating_function(1.0, 0.0, 0.3, 0.4, 2.0, K0f) == pytest.approx(K0f(0.3, 0.4))


def test_generating_function_second_order_gives_shifts():
    mass, eta, t = 1.7, 0.6, 2.3
    c_aa, c_ab, c_bb = free_generating_exponent(mass, eta, t)
    series = TruncatedSeries.from_terms({(2, 0): c_aa, (1, 1): c_ab, (0, 2): c_bb}, 2).exp()
    sh = free_moment_shifts(mass, eta, t)
    # K^f = Tr exp(alpha (q - t p / m)) exp(beta p) rho, with the O(eta) part read off at second order
    var_p = 2 * series[0, 2]
    cov = series[1, 1]
    var_y = 2 * series[2, 0]
    assert var_p == pytest.approx(sh["p2"])
    # y = q - t p/m: <y p + p y>/2 shift = shift(qp)/2 - t shift(p2)/m
    assert cov == pytest.approx(sh["qp_sym"] / 2 - t * sh["p2"] / mass)
    # <y^2> shift = shift(q2) - t shift(qp)/m + t^2 shift(p2)/m^2
    assert var_y == pytest.approx(sh["q2"] - t * sh["qp_sym"] / mass + t ** 2 * sh["p2"] / mass ** 2)
    z = free_generating_function(mass, eta, 0.1, -0.2, t)
    assert z == pytest.approx(np.exp(c_aa * 0.01 + c_ab * -0.02 + c_bb * 0.04))


def test_energy_growth():
    assert energy_growth_free(1.0, 1.0, 0.0) == 0
    assert energy_growth_free(1.0, 1.0, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        energy_growth_free(1.0, 1.0, -1.0)


@pytest.mark.parametrize("omega", [0.25, 0.5, 1.0, 2.0, 7.0])
def test_oscillator_energy_shift_equals_free_mass(omega):
    m = OscillatorModel(10, eta=0.37, mass=1.9, omega=omega)
    for t in (0.3, 4.0):
        assert decoherence_shifts(m, t).energy == pytest.approx(energy_growth_free(1.9, 0.37, t), rel=1e-14)
