import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdelab.weighted_space import (Quadrature, WeightFunction, build_quadrature, check_admissible,
                                    check_weight_pair, gaussian_moment, half_range_hermite, make_weight,
                                    weighted_inner, weighted_norm_sq, write_norms_csv)


def test_make_weight_rejects_bad_parameters():
    with pytest.raises(ValueError, match="n must exceed d"):
        make_weight("poly_decay", n=3, d=3)
    with pytest.raises(ValueError, match="gamma must be positive"):
        make_weight("exp_decay", gamma=0.0)


def test_weight_norms_oracle():
    # exp(-2|x|) on R^3: 4 pi * 2 / 2^3 = pi
    w = make_weight("exp_decay", gamma=2.0, d=3)
    assert w.sup_norm() == 1.0
    assert w.l1_norm() == pytest.approx(math.pi, rel=1e-10)
    g = make_weight("gaussian", d=2)
    assert g.l1_norm() == pytest.approx(math.pi, rel=1e-10)
    h = make_weight("gaussian", d=1, half_space=True)
    assert h.l1_norm() == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-10)


def test_weight_config_round_trip():
    w = make_weight("poly_decay", n=4, d=2)
    assert WeightFunction.from_config(w.to_config()) == w


def test_gauss_hermite_integrates_gaussian():
    q = build_quadrature("full_space", order=20, d=1)
    g = make_weight("gaussian", d=1)
    assert abs(q.integrate(g(q.nodes)) - math.sqrt(math.pi)) < 1e-13
    assert weighted_norm_sq(q.nodes[:, 0], g, q) == pytest.approx(gaussian_moment(2), rel=1e-13)


def test_half_range_rule_moments():
    x, w = half_range_hermite(16)
    # weights include exp(-x^2): sum w x^k = int_0^inf x^k exp(-x^2)
    for k in range(0, 31):
        assert np.sum(w * x ** k) == pytest.approx(gaussian_moment(k, half_line=True), rel=1e-11)
    assert np.all(w > 0) and np.all(x > 0)


def test_half_space_quadrature():
    q = build_quadrature("half_space", order=12, d=1)
    val = q.integrate(q.nodes[:, 0] * np.exp(-q.nodes[:, 0] ** 2))
    assert val == pytest.approx(0.5, rel=1e-12)


def test_torus_quadrature_and_config():
    q = build_quadrature("torus_truncation", R=5.0, resolution=16, d=2)
    assert q.size == 256
    assert q.spacing() == pytest.approx(10 / 16)
    assert q.integrate(np.ones(q.size)) == pytest.approx(100.0)
    q2 = Quadrature.from_config(q.to_config())
    assert np.array_equal(q2.nodes, q.nodes)
    with pytest.raises(ValueError):
        build_quadrature("torus_truncation", R=-1.0, resolution=8)


def test_unknown_domain_and_order():
    with pytest.raises(ValueError):
        build_quadrature("sphere", order=4)
    with pytest.raises(ValueError):
        build_quadrature("full_space", order=1)


def test_inner_product_shape_check():
    q = build_quadrature("full_space", order=8, d=1)
    g = make_weight("gaussian")
    with pytest.raises(ValueError):
        weighted_inner(np.ones(3), np.ones(3), g, q)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_inner_product_is_bilinear_symmetric(a, b):
    q = build_quadrature("full_space", order=10, d=1)
    g = make_weight("gaussian")
    x = q.nodes[:, 0]
    u = np.polyval(a, x)
    v = np.polyval(b, x)
    assert weighted_inner(u, v, g, q) == pytest.approx(weighted_inner(v, u, g, q), rel=1e-12, abs=1e-12)
    assert weighted_norm_sq(u, g, q) >= 0
    assert weighted_inner(2 * u + v, v, g, q) == pytest.approx(
        2 * weighted_inner(u, v, g, q) + weighted_norm_sq(v, g, q), rel=1e-10, abs=1e-10)


def test_admissibility_verdicts():
    x = np.linspace(0, 16, 9)
    rep = check_admissible(make_weight("exp_decay", gamma=1.0), 1.0, x)
    assert rep.admissible
    assert rep.C_hat == pytest.approx(math.e, rel=1e-3)
    rep = check_admissible(make_weight("gaussian"), 1.0, x)
    assert not rep.admissible and rep.witness is not None
    assert check_admissible(make_weight("poly_decay", n=2), 1.0, x).admissible


def test_weight_pair_finiteness():
    q = build_quadrature("torus_truncation", R=40.0, resolution=2 ** 14, d=1)
    z, r = make_weight("exp_decay", gamma=2.0), make_weight("exp_decay", gamma=1.0)
    rep = check_weight_pair(z, r, q)
    assert rep.finite and rep.value == pytest.approx(2.0, rel=1e-4)
    assert not check_weight_pair(r, r, q).finite
    assert check_weight_pair(make_weight("poly_decay", n=4), make_weight("poly_decay", n=2), q).finite


def test_write_norms_csv(tmp_path):
    p = tmp_path / "n.csv"
    write_norms_csv(p, [("rho_l1", math.pi, 1e-12)])
    lines = p.read_text().splitlines()
    assert lines[0] == "name,value,abs_err_est"
    assert float(lines[1].split(",")[1]) == math.pi
