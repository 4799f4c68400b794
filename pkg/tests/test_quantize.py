from __future__ import annotations

import math

import numpy as np
import pytest

from dnparametrix.eikonal import airy_model, solve_eikonal, zero_model
from dnparametrix.quantize import (AliasingError, CutoffSpec, NumericJets, TorusGrid, bump, cutoff_Phi, dn_symbol,
                                   dn_symbol_values, dump_grid_function, evaluate_parametrix, load_grid_function,
                                   model_residual_mode, model_residual_norm, op_apply, parametrix_dt0_symbol)
from dnparametrix.symring import rho_value
from dnparametrix.transport import solve_transport


def _jets(model):
    ph = solve_eikonal(model)
    am = solve_transport(model, ph)
    return ph, am, NumericJets(ph, am)


def test_bump_plateau_support_and_derivatives():
    s = np.linspace(-3, 3, 601)
    b = bump(s)
    assert np.all(b[np.abs(s) <= 1] == 1.0)
    assert np.all(b[np.abs(s) >= 2] == 0.0)
    x = np.linspace(1.05, 1.95, 40)
    step = 1e-5
    fd1 = (bump(x + step) - bump(x - step)) / (2 * step)
    fd2 = (bump(x + step) - 2 * bump(x) + bump(x - step)) / step ** 2
    assert np.max(np.abs(fd1 - bump(x, 1))) < 1e-6
    assert np.max(np.abs(fd2 - bump(x, 2))) < 1e-3
    assert np.allclose(bump(-x, 1), -bump(x, 1))
    with pytest.raises(ValueError):
        bump(x, 3)


def test_cutoff_is_one_near_boundary_and_vanishes_far_out():
    h, mu = 1e-3, 0.5
    t = np.array([0.0, 1e-4, 10.0])
    Phi = cutoff_Phi(t, 0.0, h, mu)
    assert Phi[0] == 1.0 and Phi[1] == 1.0 and Phi[2] == 0.0
    P, Pt, Ptt = cutoff_Phi(t, 0.0, h, mu, order=2)
    assert Pt[0] == 0.0 and Ptt[0] == 0.0
    with pytest.raises(ValueError):
        CutoffSpec(eps=0.8)


def test_grid_window_and_period_shrink():
    g = TorusGrid.for_window(1, 64, 1 / 64, eta_cover=4.0)
    assert g.eta_max >= 4.0 - 1e-12
    assert g.period < 2 * math.pi
    with pytest.raises(ValueError):
        TorusGrid(1, 64, 1 / 64, eta_cover=4.0)
    with pytest.raises(ValueError):
        TorusGrid(1, 60, 0.1)


def test_identity_and_frequency_multiplier():
    g = TorusGrid.for_window(1, 128, 1 / 16)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    assert np.max(np.abs(op_apply(1.0, f, g) - f)) < 1e-13
    k = 5
    w = g.plane_wave((k,))
    out = op_apply(lambda ys, es: es[0], w, g)
    assert np.max(np.abs(out - g.h * k * 2 * math.pi / g.period * w)) < 1e-12


def test_position_dependent_symbol_matches_pointwise_product():
    g = TorusGrid.for_window(1, 32, 1 / 4)
    w = g.plane_wave((3,))
    sym = lambda ys, es: np.cos(ys[0]) * (1 + es[0] ** 2)
    eta3 = g.h * 3 * 2 * math.pi / g.period
    want = np.cos(g.nodes[0]) * (1 + eta3 ** 2) * w
    assert np.max(np.abs(op_apply(sym, w, g) - want)) < 1e-11


def test_aliasing_guard():
    g = TorusGrid.for_window(1, 64, 1 / 16)
    with pytest.raises(AliasingError):
        op_apply(lambda ys, es: 1.0 + 0 * es[0], g.plane_wave((1,)), g, guard=True)
    op_apply(lambda ys, es: bump(es[0]), g.plane_wave((1,)), g, guard=True)


def test_grid_function_round_trip(tmp_path):
    g = TorusGrid.for_window(2, 8, 0.5)
    v = np.arange(64).reshape(8, 8) * (1 + 2j)
    p = tmp_path / "f.bin"
    dump_grid_function(p, g, v)
    meta, back = load_grid_function(p)
    assert meta["dims"] == 2 and meta["n_modes"] == 8 and meta["h"] == 0.5
    assert np.array_equal(back, v)


def test_parametrix_at_boundary_is_window_projection():
    model = airy_model(1, 2, 4)
    ph, am, jets = _jets(model)
    g = TorusGrid.for_window(1, 64, 1 / 16)
    f = g.plane_wave((7,))
    eta = g.h * 7 * 2 * math.pi / g.period
    u0 = evaluate_parametrix(ph, am, CutoffSpec(), f, 0.0, g, 0.5, jets)
    assert np.max(np.abs(u0 - bump(eta) * f)) < 1e-12


def test_zero_model_dn_symbol_is_rho_window():
    model = zero_model(2, 4)
    ph, am, jets = _jets(model)
    g = TorusGrid.for_window(1, 64, 1 / 16)
    sym = dn_symbol(ph, am, 1, 0, g, 0.3, jets)
    eta = g.eta[0]
    assert np.max(np.abs(sym.field.ravel() - bump(eta) * rho_value(eta, 0.3))) < 1e-14


def test_dn_symbol_first_correction_for_airy():
    ph, am, jets = _jets(airy_model(1, 2, 4))
    eta, mu, h = np.array([0.0, 0.4]), 0.5, 0.01
    r = rho_value(eta, mu)
    got = dn_symbol_values(jets, 1, 0, [eta], mu, h)
    assert np.max(np.abs(got - (r - 1j * h / (4 * r ** 2)))) < 1e-14
    with pytest.raises(ValueError):
        dn_symbol_values(jets, 0, 3, [eta], mu, h)


def test_dt0_symbol_contains_all_h_orders():
    ph, am, jets = _jets(airy_model(1, 2, 5))
    eta, mu, h = np.array([0.1]), 0.5, 0.02
    full = parametrix_dt0_symbol(jets, [eta], mu, h)
    # with s beyond the deepest a_{1,j} both sums see the same terms
    deep = dn_symbol_values(jets, 8, 0, [eta], mu, h)
    assert np.max(np.abs(full - deep)) < 1e-13
    shallow = dn_symbol_values(jets, 1, 0, [eta], mu, h)
    assert np.max(np.abs(full - shallow)) > 1e-6


def test_residual_mode_vanishes_outside_support_and_decays():
    ph, am, jets = _jets(airy_model(1, 2, 8))
    spec = CutoffSpec(0.1, 0.05)
    t = np.linspace(0, 2, 2001)
    r = model_residual_mode(jets, lambda t: t, t, 0.0, 0.5, 1 / 64, spec)
    assert np.all(r[t > 2 * 0.05 * 0.5] == 0)
    n1 = model_residual_norm(jets, lambda t: t, 1 / 32, 0.5, spec, eta1s=[0.0, 0.5], n_t=4001)
    n2 = model_residual_norm(jets, lambda t: t, 1 / 128, 0.5, spec, eta1s=[0.0, 0.5], n_t=4001)
    assert n2 < n1
