import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochcollapse.fock import (FockSpace, expectation_value, is_hermitian,
                                ladder_and_quadrature_operators, truncation_leakage)


def test_lowering_on_fock_state():
    sp = FockSpace(8)
    out = sp.a @ sp.basis(3)
    assert np.allclose(out, math.sqrt(3) * sp.basis(2), rtol=0, atol=1e-15)


def test_commutator_at_dim_4():
    sp = FockSpace(4)
    comm = sp.a @ sp.adag - sp.adag @ sp.a
    expected = np.eye(4)
    expected[3, 3] = 1 - 4
    assert np.allclose(comm, expected, atol=1e-14)


def test_position_definition_and_sigma():
    sp = FockSpace(10)
    assert sp.sigma == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert np.allclose(sp.q, sp.sigma * (sp.a + sp.adag))


def test_operator_set_is_hermitian_where_expected():
    ops = ladder_and_quadrature_operators(FockSpace(12, mass=2.0, omega=0.7), t=1.3)
    assert set(ops) == {"a", "adag", "N", "q", "p", "X1", "X2"}
    for name in ("N", "q", "p", "X1", "X2"):
        assert is_hermitian(ops[name])
    assert not is_hermitian(ops["a"])


@pytest.mark.parametrize("mass,omega", [(1.0, 1.0), (2.5, 0.3)])
def test_canonical_commutator_below_top_level(mass, omega):
    sp = FockSpace(15, mass, omega)
    comm = sp.q @ sp.p - sp.p @ sp.q
    assert np.max(np.abs(comm[:-1, :-1] - 1j * np.eye(14))) <= 1e-12


def test_number_operator_exact_on_fock_states():
    sp = FockSpace(9)
    for n in range(8):
        assert np.array_equal(sp.number @ sp.basis(n), n * sp.basis(n))
        # sqrt(n)**2 may differ from n in the last bit
        assert np.max(np.abs(sp.adag @ sp.a @ sp.basis(n) - n * sp.basis(n))) <= 4 * np.finfo(float).eps * max(n, 1)


@given(st.floats(min_value=-20, max_value=20, allow_nan=False))
@settings(max_examples=30, deadline=None)
def test_quadrature_sum_of_squares(t):
    sp = FockSpace(10)
    lhs = sp.x1(t) @ sp.x1(t) + sp.x2(t) @ sp.x2(t)
    rhs = 2 * sp.sigma ** 2 * (2 * sp.number + np.eye(10))
    assert np.max(np.abs((lhs - rhs)[:-1, :-1])) < 1e-12


def test_vacuum_number_and_fock_position():
    sp = FockSpace(10)
    assert expectation_value(sp.number, sp.vacuum()) == 0
    for n in range(10):
        assert expectation_value(sp.q, sp.basis(n)) == 0


def test_coherent_occupation():
    sp = FockSpace(30)
    assert expectation_value(sp.number, sp.coherent(1.0)).real == pytest.approx(1.0, abs=1e-10)


def test_expectation_matches_density_form():
    sp = FockSpace(12)
    psi = sp.coherent(0.4 - 0.7j)
    assert expectation_value(sp.x1(0.3), psi) == pytest.approx(expectation_value(sp.x1(0.3), sp.projector(psi)))


def test_expectation_dimension_mismatch():
    with pytest.raises(ValueError):
        expectation_value(FockSpace(4).number, FockSpace(5).vacuum())


def test_leakage_examples():
    assert truncation_leakage(FockSpace(10).vacuum(), 2) == 0
    w = truncation_leakage(FockSpace(8).coherent(2.0, normalize=False), 1)
    assert w == pytest.approx(math.exp(-4) * 4 ** 7 / math.factorial(7), rel=1e-12)
    assert truncation_leakage(FockSpace(40).coherent(1.0), 4) < 1e-12


def test_leakage_guard_range():
    with pytest.raises(ValueError):
        truncation_leakage(FockSpace(4).vacuum(), 4)


def test_space_is_immutable():
    sp = FockSpace(5)
    with pytest.raises(ValueError):
        sp.a[0, 1] = 3.0
