import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdelab.gauss_operator import (CoeffVector, GaussBasis, apply_semigroup, eigenfunction_eval, eigenvalue,
                                    fd_spectrum, from_coeffs, gauss_basis, mode_table, spectrum, to_coeffs,
                                    write_spectrum_csv)


def test_eigenvalue_formula():
    assert [eigenvalue(p) for p in range(5)] == [-2.0, -6.0, -10.0, -14.0, -18.0]
    assert eigenvalue((1, 0)) == -4.0
    assert eigenvalue((0, 1, 2), d=3) == -12.0
    with pytest.raises(ValueError):
        eigenvalue((1, 2), d=3)
    with pytest.raises(ValueError):
        eigenvalue(-1)


def test_mode_table_order():
    table = mode_table(2, 3)
    mus = [eigenvalue(p) for p in table]
    assert mus == sorted(mus, reverse=True)
    assert table[0] == (0, 0) and table[1] == (1, 0)


def test_eigenfunctions_solve_the_operator():
    # phi'' - 2 x phi' = mu phi on the half-line, by central differences
    x = np.linspace(0.2, 2.5, 12)
    h = 1e-4
    for p in range(4):
        f = lambda y: eigenfunction_eval((p,), y)
        lhs = (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2 - 2 * x * (f(x + h) - f(x - h)) / (2 * h)
        assert np.allclose(lhs, eigenvalue(p) * f(x), rtol=1e-5, atol=1e-5)
        assert abs(eigenfunction_eval((p,), np.array([0.0]))[0]) < 1e-15  # Dirichlet at 0


@pytest.mark.parametrize("d,cutoff", [(1, 32), (2, 8)])
def test_basis_is_orthonormal(d, cutoff):
    b = gauss_basis(d, cutoff)
    gram = (b.phi * b.rho_weights) @ b.phi.T
    assert np.max(np.abs(gram - np.eye(b.n_modes))) < 1e-12


def test_basis_rejects_low_order():
    with pytest.raises(ValueError, match="quadrature order"):
        GaussBasis(1, 16, 20)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=16, max_size=16))
def test_transform_round_trip(c):
    c = np.array(c)
    cv = CoeffVector(c, 16, 1)
    back = to_coeffs(from_coeffs(cv), cutoff=16)
    assert np.allclose(back.c, c, atol=1e-11)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=16, max_size=16), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_semigroup_contracts_and_composes(c, s, t):
    c = np.array(c)
    cv = CoeffVector(c, 16, 1)
    out = apply_semigroup(cv, t)
    assert out.norm() <= math.exp(-2 * t) * cv.norm() * (1 + 1e-12) + 1e-300
    twice = apply_semigroup(apply_semigroup(cv, s), t)
    assert np.allclose(twice.c, apply_semigroup(cv, s + t).c, rtol=1e-12, atol=1e-300)


def test_semigroup_rejects_negative_time():
    with pytest.raises(ValueError):
        apply_semigroup(CoeffVector(np.ones(4), 4, 1), -0.1)


def test_fd_spectrum_matches():
    fd = fd_spectrum(8.0, 1e-3, 3)
    assert np.allclose(fd, [-2.0, -6.0, -10.0], rtol=1e-4)


def test_spectrum_csv(tmp_path):
    p = tmp_path / "s.csv"
    write_spectrum_csv(p, count=3)
    assert p.read_text().splitlines() == ["index,eigenvalue", "0,-2.0", "1,-6.0", "2,-10.0"]
    assert spectrum(1, 4).tolist() == [-2.0, -6.0, -10.0, -14.0]
