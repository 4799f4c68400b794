from __future__ import annotations

from fractions import Fraction

import pytest

from dnparametrix.symring import (ComplexRational, JetSeries, NumericExpr, ParseError, SymExpr, format_expr,
                                  iter_multi_indices, parse_expr, rho_value)


def test_rho_value_has_positive_imaginary_part_and_squares_back():
    for eta1, mu in [(0.0, 1.0), (0.7, 0.2), (-1.5, -0.3), (2.0, 1e-3)]:
        r = rho_value(eta1, mu)
        assert r.imag > 0
        assert abs(r * r - complex(-eta1, mu)) < 1e-12


def test_rho_at_zero_frequency_unit_mu_is_eighth_root_of_unity():
    assert abs(rho_value(0.0, 1.0) - complex(2 ** -0.5, 2 ** -0.5)) < 1e-15


def test_laurent_rho_powers_cancel():
    d = 2
    r = SymExpr.rho(d)
    assert r * SymExpr.rho(d, -1) == SymExpr.one(d)
    assert (r ** 3).rho_degree() == 3
    assert (r ** -2).rho_valuation() == -2


def test_mixed_expression_degree_and_valuation():
    d = 3
    e = SymExpr.rho(d, 2) * SymExpr.y(d, 1) + SymExpr.rho(d, -3).scale(ComplexRational(0, 1))
    assert e.rho_degree() == 2
    assert e.rho_valuation() == -3
    assert SymExpr.zero(d).rho_degree() == float("-inf")
    assert SymExpr.zero(d).rho_valuation() == float("inf")


def test_eta1_derivative_of_rho_follows_chain_rule():
    # rho^2 = -eta1 + i mu  =>  d rho / d eta1 = -1 / (2 rho)
    d = 2
    dr = SymExpr.rho(d).diff_eta(1)
    assert dr == SymExpr.rho(d, -1).scale(Fraction(-1, 2))


def test_mu_derivative_holds_rho_fixed():
    d = 2
    assert SymExpr.rho(d).diff_mu().is_zero()
    assert (SymExpr.mu(d) * SymExpr.mu(d) * SymExpr.rho(d)).diff_mu() == (SymExpr.mu(d) * SymExpr.rho(d)).scale(2)


def test_y_derivative_and_polynomial_structure():
    d = 3
    y2 = SymExpr.y(d, 2)
    e = y2 * y2 * SymExpr.eta(d, 2)
    assert e.diff_y(2) == (y2 * SymExpr.eta(d, 2)).scale(2)
    assert e.diff_y(1).is_zero()
    assert e.diff_multi_y((0, 3)).is_zero()


def test_inverse_of_unit_and_monomial():
    d = 2
    e = SymExpr.rho(d, 3).scale(ComplexRational(2, 1))
    assert e * e.inverse() == SymExpr.one(d)
    with pytest.raises(Exception):
        (SymExpr.one(d) + SymExpr.y(d, 1)).inverse()


def test_subs_mu_specialises():
    d = 2
    e = SymExpr.mu(d) * SymExpr.rho(d) + SymExpr.const(d, 1)
    s = e.subs_mu(Fraction(1, 2))
    assert s == SymExpr.rho(d).scale(Fraction(1, 2)) + SymExpr.const(d, 1)


def test_text_round_trip():
    d = 3
    e = (SymExpr.rho(d, -2).scale(ComplexRational(Fraction(3, 4), -2)) * SymExpr.y(d, 1)
         + SymExpr.mu(d) * SymExpr.eta(d, 2) + SymExpr.const(d, Fraction(-5, 7)))
    assert parse_expr(format_expr(e), d) == e


def test_parse_rejects_garbage():
    with pytest.raises(ParseError):
        parse_expr("rho +* 2", 2)
    with pytest.raises(ParseError):
        parse_expr("__import__('os')", 2)


def test_numeric_evaluation_matches_float_arithmetic():
    d = 2
    e = SymExpr.rho(d, 2) * SymExpr.y(d, 1) + SymExpr.rho(d, -1).scale(ComplexRational(0, 3)) + SymExpr.mu(d)
    eta1, mu, y1 = 0.3, 0.4, 1.7
    r = rho_value(eta1, mu)
    want = r ** 2 * y1 + 3j / r + mu
    assert abs(e.eval_numeric([y1], eta1, (), mu) - want) < 1e-13
    f = NumericExpr(e)
    assert abs(f(r, mu, [y1], []) - want) < 1e-13


def test_complex_rational_arithmetic_is_exact():
    a = ComplexRational(Fraction(1, 3), Fraction(2, 5))
    b = ComplexRational(-2, Fraction(1, 7))
    assert (a * b) / b == a
    assert a.conjugate().conjugate() == a
    assert ComplexRational(0, 1) ** 2 == ComplexRational(-1)


def test_jet_series_product_truncates_and_shifts():
    d = 2
    one = SymExpr.one(d)
    a = JetSeries(d, {(0, 0): one, (1, 0): one.scale(2), (0, 1): one.scale(3)})
    b = JetSeries(d, {(1, 0): one, (0, 1): one})
    p = a.mul(b, t_trunc=2, h_trunc=2)
    assert p.coeff(1, 0) == one
    assert p.coeff(1, 1) == one.scale(5)
    assert p.t_trunc == 2 and p.h_trunc == 2
    with pytest.raises(KeyError):
        p.coeff(2, 0)
    assert a.shift(1, 2).coeff(2, 2) == one.scale(2)
    assert a.dt().coeff(0, 0) == one.scale(2)


def test_multi_indices_cover_simplex():
    got = list(iter_multi_indices(2, 2))
    assert len(got) == 6
    assert (0, 0) in got and (1, 1) in got and (0, 2) in got
