"""Symbolic assembly of the parametrix remainder ``A_M``.

Applying the model operator to ``e^{i phi/h} a`` and stripping the phase
leaves

    A_M = ((phi_t)^2 + phi_{y1} - rho^2 - ih phi_tt) a - 2ih phi_t a_t
          - ih a_{y1} - h^2 a_tt + e^{-i phi/h} E_M(m, e^{i phi/h} a).

Once the eikonal and transport jets are solved, every coefficient of
``A_M`` must sit at ``t``-order ``>= M`` or ``h``-order ``>= M + 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .eikonal import ModelSpec, PhaseJet, eta_derivatives
from .symring import ComplexRational, JetSeries, SymExpr, iter_multi_indices
from .transport import AmplitudeJet, PsiTable, build_psi, conjugated_by_psi

NEG_I = ComplexRational(0, -1)


def _as_series(x, d: int) -> JetSeries:
    if isinstance(x, JetSeries):
        return x
    if isinstance(x, SymExpr):
        return JetSeries.scalar(x)
    return JetSeries.scalar(SymExpr.const(d, x))


def _parent(alpha):
    i = next(ax for ax, e in enumerate(alpha) if e)
    return i, alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]


@dataclass(frozen=True, eq=False)
class CompositionExpansion:
    result: JetSeries
    M: int


def compose_EM(a, b, M: int, h_trunc: int | None = None) -> CompositionExpansion:
    """``sum_{|alpha| <= M} (-ih)^{|alpha|}/|alpha|! d_eta^alpha a * d_y^alpha b``.

    ``a`` and ``b`` may be ``SymExpr`` or ``JetSeries``; the ``h`` powers from
    the expansion are carried in the series ``h``-order.
    """
    d = b.d if isinstance(b, (SymExpr, JetSeries)) else a.d
    sa, sb = _as_series(a, d), _as_series(b, d)
    n = d - 1
    out = JetSeries(d, {}, None, h_trunc)
    da: dict = {(0,) * n: sa}
    db: dict = {(0,) * n: sb}
    for alpha in iter_multi_indices(n, M):
        if any(alpha):
            i, parent = _parent(alpha)
            da[alpha] = da[parent].diff_eta(i + 1)
            db[alpha] = db[parent].diff_y(i + 1)
        if da[alpha].is_zero() or db[alpha].is_zero():
            continue
        order = sum(alpha)
        c = NEG_I ** order * ComplexRational(Fraction(1, math.factorial(order)))
        term = da[alpha].mul(db[alpha], h_trunc=h_trunc).mul(SymExpr.const(d, c)).shift(0, order)
        out = out + term
    return CompositionExpansion(out.truncate(None, h_trunc), M)


def conjugated_composition(model: ModelSpec, phase: PhaseJet, b: JetSeries,
                           t_trunc: int, h_trunc: int) -> JetSeries:
    """``e^{-i phi/h} E_M(m, e^{i phi/h} b)`` expanded directly.

    Uses ``sum_alpha d_eta^alpha m * L^alpha b / |alpha|!`` with the commuting
    operators ``L_i b = (d_{y_i} phi) b - ih d_{y_i} b``; no tables involved.
    """
    d = model.d
    n = d - 1
    alpha_max = min(model.eta_degree(), model.M)
    phi = phase.series()
    grads = [phi.diff_y(i) for i in range(1, d)]
    minus_i = SymExpr.const(d, NEG_I)
    L: dict = {(0,) * n: b.truncate(t_trunc, h_trunc)}
    out = JetSeries(d, {}, t_trunc, h_trunc)
    dm: dict = {}
    for (k, l), expr in model.m_table.items():
        for alpha, der in eta_derivatives(expr, alpha_max).items():
            piece = JetSeries(d, {(k, l): der})
            dm[alpha] = piece if alpha not in dm else dm[alpha] + piece
    for alpha in iter_multi_indices(n, alpha_max):
        if any(alpha) and alpha not in L:
            i, parent = _parent(alpha)
            prev = L[parent]
            L[alpha] = (grads[i].mul(prev, t_trunc=t_trunc, h_trunc=h_trunc)
                        + prev.diff_y(i + 1).mul(minus_i).shift(0, 1)).truncate(t_trunc, h_trunc)
        if alpha not in dm:
            continue
        coeff = SymExpr.const(d, Fraction(1, math.factorial(sum(alpha))))
        out = out + dm[alpha].mul(L[alpha], t_trunc=t_trunc, h_trunc=h_trunc).mul(coeff)
    return out.truncate(t_trunc, h_trunc)


def _transport_part(phase: PhaseJet, a: JetSeries, t_trunc: int, h_trunc: int) -> JetSeries:
    """Everything in ``A_M`` except the conjugated composition."""
    d = phase.d
    phi = phase.series()
    phit = phi.dt()
    i_ = SymExpr.const(d, ComplexRational(0, 1))
    coef = phit.mul(phit, t_trunc=t_trunc) + phi.diff_y(1) - SymExpr.rho(d, 2)
    coef = coef - phit.dt().mul(i_).shift(0, 1)
    out = coef.mul(a, t_trunc=t_trunc, h_trunc=h_trunc)
    out = out - phit.mul(a.dt(), t_trunc=t_trunc, h_trunc=h_trunc).mul(SymExpr.const(d, ComplexRational(0, 2))).shift(0, 1)
    out = out - a.diff_y(1).mul(i_).shift(0, 1)
    out = out - a.dt().dt().shift(0, 2)
    return out.truncate(t_trunc, h_trunc)


def default_truncation(M: int) -> tuple[int, int]:
    """Orders kept when assembling ``A_M``: enough to see the first allowed terms."""
    return M + 1, M + 3


def assemble_AM(model: ModelSpec, phase: PhaseJet, amps: AmplitudeJet, M: int | None = None,
                t_trunc: int | None = None, h_trunc: int | None = None) -> JetSeries:
    """``A_M`` as a (t, h) series via the direct composition expansion."""
    M = model.M if M is None else M
    tt, ht = default_truncation(M)
    tt = tt if t_trunc is None else t_trunc
    ht = ht if h_trunc is None else h_trunc
    a = amps.full_series()
    return _transport_part(phase, a, tt, ht) + conjugated_composition(model, phase, a, tt, ht)


def assemble_AM_regrouped(model: ModelSpec, phase: PhaseJet, amps: AmplitudeJet, M: int | None = None,
                          t_trunc: int | None = None, h_trunc: int | None = None,
                          psi: PsiTable | None = None) -> JetSeries:
    """``A_M`` with the composition regrouped as ``sum_s h^s Psi_{s,beta} d^beta a``."""
    M = model.M if M is None else M
    tt, ht = default_truncation(M)
    tt = tt if t_trunc is None else t_trunc
    ht = ht if h_trunc is None else h_trunc
    psi = psi if psi is not None else build_psi(model, phase, s_max=ht, t_trunc=tt)
    a = amps.full_series()
    return _transport_part(phase, a, tt, ht) + conjugated_by_psi(psi, a, tt, ht)


@dataclass
class ResidualReport:
    model_id: str
    M: int
    max_t_order: int
    max_h_order: int
    forbidden: list[tuple[int, int]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.forbidden

    def to_dict(self) -> dict:
        return {"model": self.model_id, "M": self.M, "max_t_order": self.max_t_order,
                "max_h_order": self.max_h_order, "forbidden": [list(o) for o in self.forbidden],
                "passed": self.passed}


def verify_AM_structure(AM: JetSeries, M: int, model_id: str = "model") -> ResidualReport:
    """Every nonzero coefficient must have ``t``-order ``>= M`` or ``h``-order ``>= M + 2``."""
    bad = sorted(o for o in AM.coeffs if o[0] < M and o[1] < M + 2)
    max_t = (AM.t_trunc - 1) if AM.t_trunc is not None else max((o[0] for o in AM.coeffs), default=0)
    max_h = (AM.h_trunc - 1) if AM.h_trunc is not None else max((o[1] for o in AM.coeffs), default=0)
    return ResidualReport(model_id, M, max_t, max_h, bad)


__all__ = [
    "CompositionExpansion", "compose_EM", "conjugated_composition", "assemble_AM",
    "assemble_AM_regrouped", "ResidualReport", "verify_AM_structure", "default_truncation",
]
