from __future__ import annotations

from fractions import Fraction

from dnparametrix.eikonal import airy_model, random_model, solve_eikonal, zero_model
from dnparametrix.symring import ComplexRational, SymExpr
from dnparametrix.transport import (amp_response, check_amp_grading, check_amp_scaling_numeric,
                                    check_amp_structure, check_E_grading, solve_transport, transport_residual)


def test_zero_model_amplitude_is_one():
    m = zero_model(2, 4)
    amps = solve_transport(m, solve_eikonal(m))
    assert amps.a(0, 0) == SymExpr.one(2)
    assert all(e.is_zero() for kj, e in amps.amps.items() if kj != (0, 0))


def test_boundary_normalisation():
    m = random_model(2, d=2, M=5).specialize_mu()
    amps = solve_transport(m, solve_eikonal(m))
    assert amps.a(0, 0) == SymExpr.one(2)
    for j in range(1, 4):
        assert amps.a(0, j).is_zero()


def test_transport_residuals_vanish():
    m = random_model(5, d=2, M=5).specialize_mu()
    ph = solve_eikonal(m)
    amps = solve_transport(m, ph)
    for j in range(3):
        assert transport_residual(m, ph, amps, j).is_zero()


def test_transport_residual_detects_corruption():
    m = airy_model(1, 2, 5)
    ph = solve_eikonal(m)
    amps = solve_transport(m, ph)
    bad = amps.replace(2, 0, amps.a(2, 0) + SymExpr.rho(2, -4))
    assert not transport_residual(m, ph, bad, 0).is_zero()


def test_amp_grading_on_random_models():
    for seed in range(3):
        m = random_model(seed, d=2 + seed % 2, M=5).specialize_mu()
        amps = solve_transport(m, solve_eikonal(m))
        assert not check_amp_grading(amps)
        assert not check_E_grading(amps)


def test_amplitude_perturbation_response():
    d = 2
    m = airy_model(1, d, 6)
    ph = solve_eikonal(m)
    amps = solve_transport(m, ph)
    delta = SymExpr.y(d, 1) + SymExpr.const(d, Fraction(1, 3))
    for k, j in [(1, 0), (2, 0), (1, 1), (2, 2), (3, 1)]:
        assert check_amp_structure(m, ph, amps, k, j, delta).passed


def test_amp_response_formula_small_case():
    # k = 1, j = 0: -delta / (-2i rho)^2 = delta / (4 rho^2)
    d = 2
    delta = SymExpr.one(d)
    assert amp_response(1, 0, delta) == SymExpr.rho(d, -2).scale(Fraction(1, 4))
    # k = 1, j = 1: -2 delta / (-2i rho)^3 = -2/(8i) rho^-3 = (i/4) rho^-3
    assert amp_response(1, 1, delta) == SymExpr.rho(d, -3).scale(ComplexRational(0, Fraction(1, 4)))


def test_numeric_amp_scaling_in_mu():
    m = airy_model(1, 2, 5)
    amps = solve_transport(m, solve_eikonal(m))
    for k, j in [(1, 0), (1, 1), (2, 1)]:
        assert check_amp_scaling_numeric(amps, k, j).passed
