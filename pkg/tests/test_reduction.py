from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from dnparametrix.reduction import (BoundaryData, FlatKappa, RadialPoly, compute_p, flat_kappa, gauge_correction,
                                    independence_term, reduced_dn_series, symplectic_defect, transform_m)
from dnparametrix.symring import ComplexRational, SymExpr


def test_p10_for_constant_n1():
    nu1 = Fraction(2, 3)
    bd = BoundaryData(1, Fraction(1), n_table={1: nu1}, mu=Fraction(1, 2))
    p = compute_p(bd, 2)
    assert p.p_table[(1, 0)].pulled_back == (SymExpr.one(2) + SymExpr.mu(2).scale(ComplexRational(0, 1))).scale(-nu1)
    assert p.p_table[(0, 0)].pulled_back.is_zero()
    assert p.p_table[(0, 1)].pulled_back.is_zero()
    assert p.symbolic


def test_p20_carries_factorial():
    nu2 = Fraction(5, 2)
    bd = BoundaryData(1, Fraction(1), n_table={2: nu2})
    z = SymExpr.one(2) + SymExpr.mu(2).scale(ComplexRational(0, 1))
    assert compute_p(bd, 2).p_table[(2, 0)].pulled_back == z.scale(-nu2 / 2)


def test_p_numeric_matches_symbolic_under_pullback():
    bd = BoundaryData(1, Fraction(4), n_table={1: Fraction(1, 3)}, r_table={1: RadialPoly((0, Fraction(1, 2)))},
                      mu=Fraction(1, 2))
    p = compute_p(bd, 1)
    xi = np.array([[2.3]])
    x = np.array([[0.1]])
    num = p.p_table[(1, 0)].numeric(x, xi)
    eta1 = float(xi[0, 0] ** 2 / 4 - 1)
    sym = p.p_table[(1, 0)].pulled_back.eval_numeric([0.0], eta1, (), 0.5)
    assert abs(complex(num[0]) - sym) < 1e-12


def test_numeric_data_fall_back():
    bd = BoundaryData(1, 2.0, n_table={1: lambda x: 1.0 + 0.1 * x[0]})
    p = compute_p(bd, 1)
    assert not p.symbolic
    res = transform_m(p)
    assert res.model is None and not res.symbolic
    assert np.isfinite(res.numeric[1](np.array([[0.2]]), np.array([[0.1]]))).all()


def test_invalid_boundary_data():
    with pytest.raises(ValueError):
        BoundaryData(1, Fraction(-1))
    with pytest.raises(ValueError):
        BoundaryData(1, Fraction(1), n_table={0: Fraction(1)})


def test_flat_map_glancing_sphere_goes_to_eta1_zero():
    for n0 in (1.0, 4.0, 2.5):
        eta1, _ = flat_kappa([np.sqrt(n0)], n0)
        assert abs(eta1) < 1e-15
        eta1, _ = flat_kappa([0.6 * np.sqrt(n0), 0.8 * np.sqrt(n0)], n0)
        assert abs(eta1) < 1e-15
    assert abs(flat_kappa(1.1, 1.0)[0] - 0.21) < 1e-12
    with pytest.raises(ValueError):
        flat_kappa([0.0], 1.0)


@pytest.mark.parametrize("dim", [1, 2])
def test_flat_map_is_symplectic(dim):
    kap = FlatKappa(2.0, dim)
    x = np.array([0.3, -0.2][:dim])
    xi = np.array([1.2, 0.5][:dim])
    assert symplectic_defect(kap, x, xi) < 1e-8
    y, eta = kap.forward(x, xi)
    xb, xib = kap.inverse(y, eta)
    assert np.allclose(xb, x) and np.allclose(xib, xi)


def test_transform_builds_model_from_exact_data():
    bd = BoundaryData(1, Fraction(1), n_table={1: Fraction(1)})
    res = transform_m(compute_p(bd, 3), M=5)
    assert res.symbolic and res.model.M == 5
    assert not res.model.m(1, 0).is_zero()


def test_gauge_correction():
    g = gauge_correction(BoundaryData(1, Fraction(4), q_sharp0=Fraction(1, 5)), 0.1)
    assert abs(g.multiplier() - 0.01j) < 1e-15
    assert g.prefactor == 2.0


def test_reduced_series_leading_term_and_exactness_requirement():
    bd = BoundaryData(1, Fraction(4), n_table={1: Fraction(1)})
    ser = reduced_dn_series(bd, 1)
    assert ser[0] == SymExpr.rho(2).scale(2)
    with pytest.raises(ValueError):
        reduced_dn_series(BoundaryData(1, Fraction(2)), 1)


def test_independence_on_higher_data_and_response_to_ns():
    base = BoundaryData(1, Fraction(1), n_table={1: Fraction(1, 2)})
    ref = reduced_dn_series(base, 1)
    moved = reduced_dn_series(base.with_n(3, Fraction(7)), 1)
    assert moved == ref
    delta = Fraction(1, 3)
    got = reduced_dn_series(base.with_n(1, Fraction(1, 2) + delta), 1)
    assert got[1] - ref[1] == independence_term(base, 1, delta)
