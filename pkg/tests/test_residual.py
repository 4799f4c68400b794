from __future__ import annotations

from fractions import Fraction

from dnparametrix.eikonal import ModelSpec, airy_model, random_model, solve_eikonal
from dnparametrix.residual import assemble_AM, assemble_AM_regrouped, compose_EM, verify_AM_structure
from dnparametrix.symring import ComplexRational, JetSeries, SymExpr
from dnparametrix.transport import solve_transport


def _jets(model):
    ph = solve_eikonal(model)
    return ph, solve_transport(model, ph)


def test_composition_of_polynomials_is_exact_in_one_tangential_variable():
    # a = eta1^2, b = y1^2: a#b = eta1^2 y1^2 - 2ih (2 eta1 y1) + (-ih)^2 (2*2)/2
    d = 2
    e, y = SymExpr.eta(d, 1), SymExpr.y(d, 1)
    out = compose_EM(e * e, y * y, M=4).result
    assert out.coeff(0, 0) == e * e * y * y
    assert out.coeff(0, 1) == (e * y).scale(ComplexRational(0, -4))
    assert out.coeff(0, 2) == SymExpr.const(d, -2)


def test_AM_orders_for_airy_and_random_models():
    for model in (airy_model(1, 2, 6), random_model(11, d=3, M=5).specialize_mu()):
        ph, amps = _jets(model)
        M = model.M
        rep = verify_AM_structure(assemble_AM(model, ph, amps, t_trunc=M, h_trunc=M + 2), M)
        assert rep.passed, rep.forbidden


def test_AM_structure_catches_wrong_amplitude():
    model = airy_model(1, 2, 5)
    ph, amps = _jets(model)
    bad = amps.replace(1, 1, amps.a(1, 1) + SymExpr.rho(2, -5))
    rep = verify_AM_structure(assemble_AM(model, ph, bad, t_trunc=5, h_trunc=7), 5)
    assert not rep.passed
    assert (0, 2) in rep.forbidden


def test_regrouped_assembly_agrees_with_direct_expansion():
    d = 2
    model = ModelSpec(d, 4, {(1, 0): SymExpr.eta(d, 1) * SymExpr.y(d, 1) + SymExpr.const(d, 1),
                             (0, 1): SymExpr.y(d, 1).scale(Fraction(1, 2))})
    ph, amps = _jets(model)
    a = assemble_AM(model, ph, amps, t_trunc=4, h_trunc=5)
    b = assemble_AM_regrouped(model, ph, amps, t_trunc=4, h_trunc=5)
    assert (a - b).is_zero()


def test_report_serialises():
    rep = verify_AM_structure(JetSeries(2, {(1, 1): SymExpr.one(2)}, 4, 6), 4, "m")
    assert rep.to_dict()["forbidden"] == [[1, 1]]
    assert not rep.passed
