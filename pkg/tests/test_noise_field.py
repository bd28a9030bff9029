import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdelab.noise_field import (assemble, basis_gram, build_basis, corner_windows, default_variances,
                                 extend_two_sided, ito_isometry_probe, make_noise, read_noise_csv, sample_path,
                                 write_noise_csv)


def test_default_variances_are_summable():
    a = default_variances(20)
    assert a[0] == 0.5 and a[1] == 0.25
    assert sum(a) < 1.0


@pytest.mark.parametrize("d,K,windows", [(1, 9, None), (2, 10, None), (3, 16, corner_windows(3))])
def test_basis_is_orthonormal(d, K, windows):
    basis = build_basis(K, d=d, windows=windows)
    gram = basis_gram(basis)
    assert np.max(np.abs(gram - np.eye(K))) < 1e-12


def test_rescaled_centered_window_is_orthonormal():
    basis = build_basis(6, d=1, windows=((-0.5,),), window_length=4 * math.pi)
    assert np.max(np.abs(basis_gram(basis) - np.eye(6))) < 1e-12
    x = np.linspace(-2 * math.pi, 2 * math.pi - 1e-9, 2001)
    assert np.max(np.abs(basis.evaluate(x))) <= basis.sup_bound() + 1e-12
    # low modes are odd about the window centre
    E, Em = basis.evaluate(x[1:-1]), basis.evaluate(-x[1:-1])
    assert np.allclose(E[0], -Em[0], atol=1e-12)


def test_sup_bound_at_most_one():
    assert build_basis(4, d=3).sup_bound() <= 1.0


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        make_noise(3, a=(1.0, 0.5))
    with pytest.raises(ValueError):
        make_noise(2, a=(1.0, 0.0))


def test_substreams_do_not_depend_on_batching():
    spec = make_noise(3, seed=7)
    grid = np.linspace(0, 1, 11)
    many = sample_path(spec, grid, paths=5)
    one = sample_path(spec, grid, paths=1, first_path=3)
    assert np.array_equal(many.increments[3], one.increments[0])
    assert not np.array_equal(many.increments[0], many.increments[1])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2 ** 31))
def test_prefix_property(n_short, extra, seed):
    spec = make_noise(2, seed=seed)
    dt = 0.01
    short = sample_path(spec, dt * np.arange(n_short + 1))
    long = sample_path(spec, dt * np.arange(n_short + extra + 1))
    assert np.array_equal(long.increments[..., :n_short], short.increments)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 10))
def test_two_sided_extension_keeps_increments_near_zero(neg, extra, pos):
    spec = make_noise(2, seed=3)
    dt = 0.05
    a = extend_two_sided(spec, dt * np.arange(-neg, pos + 1))
    b = extend_two_sided(spec, dt * np.arange(-neg - extra, pos + 1))
    assert np.array_equal(b.increments[..., extra:], a.increments)
    # the positive branch coincides with the one-sided sample
    fwd = sample_path(spec, dt * np.arange(pos + 1))
    assert np.array_equal(a.increments[..., neg:], fwd.increments)
    assert np.all(a.values()[..., neg] == 0.0)


def test_two_sided_needs_zero_on_grid():
    with pytest.raises(ValueError):
        extend_two_sided(make_noise(1), np.array([-0.3, 0.2, 0.7]))


def test_increment_variance():
    spec = make_noise(1, seed=11)
    inc = sample_path(spec, np.array([0.0, 0.25]), paths=20000).increments[:, 0, 0]
    assert inc.var() == pytest.approx(0.25, rel=0.05)


def test_assemble_matches_basis_sum():
    spec = make_noise(3, seed=0)
    x = np.linspace(0.1, 6, 7)
    c = np.array([1.0, -2.0, 0.5])
    direct = sum(math.sqrt(spec.a[k]) * c[k] * spec.basis.evaluate(x)[k] for k in range(3))
    assert np.allclose(assemble(spec, c, x), direct)


def test_ito_isometry_probe():
    spec = make_noise(1, a=(1.0,), seed=5)
    res = ito_isometry_probe(lambda s: np.sqrt(s), spec, 1.0, 4000, seed=5)
    assert res.analytic_rhs == pytest.approx(0.5, rel=1e-12)
    assert res.within_3sigma
    with pytest.raises(ValueError):
        ito_isometry_probe(lambda s: s, spec, 1.0, 50, seed=0)


def test_noise_csv_round_trip(tmp_path):
    spec = make_noise(2, seed=9)
    path = sample_path(spec, np.linspace(0, 1, 6), paths=2)
    f = tmp_path / "noise.csv"
    write_noise_csv(f, path, m=1)
    seed, times, inc = read_noise_csv(f)
    assert seed == 9
    assert np.array_equal(inc, path.increments[1])
    assert np.array_equal(times, path.time_grid[:-1])
