from __future__ import annotations

import cmath
import math
import warnings

import mpmath
import numpy as np
import pytest

from dnparametrix.eikonal import ModelSpec, airy_model
from dnparametrix.oracle import (AIRY_SWITCH_RADIUS, ModeODEProblem, airy, airy_dn, bvp_dn_matrix, diagonal_norm,
                                 mode_dn, model_m_function, op_norm_estimate, solve_bvp_2d, solve_mode_ode)
from dnparametrix.quantize import TorusGrid, op_apply
from dnparametrix.symring import SymExpr, rho_value


def test_airy_against_mpmath_on_both_sides_of_switch():
    rng = np.random.default_rng(1)
    pts = list(rng.uniform(-12, 12, 40) + 1j * rng.uniform(-12, 12, 40))
    pts += [AIRY_SWITCH_RADIUS * cmath.exp(1j * a) * s for a in np.linspace(-3, 3, 9) for s in (0.999, 1.001)]
    for z in pts:
        ai, aip = airy(z)
        ref, refp = complex(mpmath.airyai(z)), complex(mpmath.airyai(z, 1))
        assert abs(ai - ref) <= 1e-11 * max(abs(ref), 1e-300)
        assert abs(aip - refp) <= 1e-11 * max(abs(refp), 1e-300)


def test_airy_at_origin():
    ai, aip = airy(0)
    assert abs(ai - 1 / (3 ** (2 / 3) * math.gamma(2 / 3))) < 1e-15
    assert abs(aip + 1 / (3 ** (1 / 3) * math.gamma(1 / 3))) < 1e-15


def test_airy_dn_tends_to_rho():
    r = rho_value(0.2, 0.5)
    errs = [abs(airy_dn(0.2, 0.5, 1.0, h) - r) for h in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_airy_dn_conjugation_symmetry():
    # reversing the sign of mu conjugates the equation
    for eta1, c in [(0.0, 1.0), (0.3, 2.0), (-0.4, 0.5)]:
        a = airy_dn(eta1, 0.4, c, 0.02)
        b = airy_dn(eta1, -0.4, c, 0.02)
        assert abs(a + b.conjugate()) < 1e-12


def test_mode_ode_trivial_cases():
    assert abs(mode_dn(0.0, 1.0, 0.01) - cmath.exp(1j * math.pi / 4)) < 1e-6
    assert abs(mode_dn(0.5, 0.3, 0.01) - cmath.sqrt(complex(-0.5, 0.3))) < 1e-6


def test_mode_ode_matches_airy_closed_form():
    for eta1, mu, h in [(0.0, 0.5, 1 / 32), (0.3, 0.2, 1 / 64), (-0.5, 0.8, 1 / 128)]:
        assert abs(mode_dn(eta1, mu, h, lambda t: t) - airy_dn(eta1, mu, 1.0, h)) < 1e-8


def test_mode_solution_satisfies_boundary_values():
    sol = solve_mode_ode(ModeODEProblem(0.1, 0.5, 1 / 32, lambda t: t), boundary_value=2.0)
    assert abs(sol.u[0] - 2.0) < 1e-14 and abs(sol.u[-1]) < 1e-14
    assert sol.t[0] == 0.0 and abs(sol.t[-1] - 1.0) < 1e-14


def test_mode_problem_rejects_zero_mu():
    with pytest.raises(ValueError):
        ModeODEProblem(0.0, 0.0, 0.1)


def test_block_solver_zero_model_is_rho_multiplier():
    # h small enough that the reflection from the t = 1 closure, ~exp(-2 Im rho / h), is negligible
    g = TorusGrid.for_window(1, 64, 1 / 64, eta_cover=2.0)
    D = bvp_dn_matrix(None, g, 0.5)
    assert np.max(np.abs(D - np.diag(rho_value(g.eta[0], 0.5)))) < 1e-6
    f = np.cos(g.nodes[0])
    out = solve_bvp_2d(None, f, g, 0.5)
    assert np.max(np.abs(out - op_apply(lambda ys, es: rho_value(es[0], 0.5), f, g))) < 1e-6


def test_block_solver_matches_per_mode_for_y_independent_model():
    g = TorusGrid.for_window(1, 16, 1 / 8, eta_cover=2.0)
    m = model_m_function(airy_model(1, 2, 4), g.h)
    D = bvp_dn_matrix(m, g, 0.5)
    diag = np.array([mode_dn(float(e), 0.5, g.h, lambda t: t) for e in g.eta[0]])
    assert np.max(np.abs(np.diag(D) - diag)) <= 1e-8 * np.max(np.abs(diag))
    assert np.max(np.abs(D - np.diag(np.diag(D)))) < 1e-10


def test_block_solver_rejects_eta_dependent_models():
    d = 2
    with pytest.raises(ValueError):
        model_m_function(ModelSpec(d, 3, {(1, 0): SymExpr.eta(d, 1)}), 0.1)


def test_norm_estimate_identity_and_multiplier():
    assert abs(op_norm_estimate(np.eye(40)) - 1.0) < 1e-10
    vals = rho_value(np.linspace(-2, 2, 50), 0.3)
    est = op_norm_estimate(np.diag(vals), iters=500, tol=1e-14)
    assert abs(est - diagonal_norm(vals)) <= 0.05 * diagonal_norm(vals)


def test_norm_estimate_callable_and_warning():
    A = np.diag([3.0, 2.999, 1.0])
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        info = op_norm_estimate(lambda x: A @ x, n=3, adjoint=lambda x: A.T @ x, iters=2, return_info=True)
    assert not info.converged
    assert any(issubclass(x.category, RuntimeWarning) for x in w)
    with pytest.raises(ValueError):
        op_norm_estimate(lambda x: x)
