"""Amplitude jets ``a_{k,j}`` and the combinatorial tables behind them.

Conjugating the tangential symbol through the oscillatory factor gives

    e^{-i phi/h} Op(m) (e^{i phi/h} b)
        = sum_s h^s sum_beta Psi_{s,beta}(t) d_y^beta b,

where ``Psi_{0,0}`` is the eikonal term ``g`` and ``Psi_{s,beta}`` is built
from ``d_eta^alpha m_l`` and the tables ``G_k^{(gamma)}``.  The transport
recursion then solves for ``a_{k+1,j}`` at each ``t**k`` by an exact division
by ``-2i(k+1) rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .eikonal import ModelSpec, PhaseJet, eta_derivatives, solve_eikonal
from .symring import ComplexRational, I, JetSeries, NumericExpr, SymAccumulator, SymExpr, iter_multi_indices, rho_value

NEG_I = ComplexRational(0, -1)


def _parent(beta: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    i = next(ax for ax, e in enumerate(beta) if e)
    return i, beta[:i] + (beta[i] - 1,) + beta[i + 1:]


def _binom_multi(alpha: Sequence[int], beta: Sequence[int]) -> int:
    out = 1
    for a, b in zip(alpha, beta):
        out *= math.comb(a, b)
    return out


def _le(beta: Sequence[int], alpha: Sequence[int]) -> bool:
    return all(b <= a for a, b in zip(alpha, beta))


@dataclass(frozen=True, eq=False)
class GTable:
    """``G_k^{(beta)}(phi)`` as ``t``-series truncated at ``t_trunc``.

    Normalised so that ``(-ih)^{|beta|}/|beta|! * e^{-i phi/h} d_y^beta e^{i phi/h}
    = sum_k h^{|beta|-k} G_k^{(beta)}``.  In particular
    ``G_{|beta|}^{(beta)} = prod (d_y phi)^beta / |beta|!``.
    """

    d: int
    beta_max: int
    t_trunc: int
    entries: dict[tuple[int, tuple[int, ...]], JetSeries]

    def get(self, k: int, beta: tuple[int, ...]) -> JetSeries:
        out = self.entries.get((k, tuple(beta)))
        return out if out is not None else JetSeries(self.d, {}, self.t_trunc, None)

    def theta(self, nu: int, k: int, beta: tuple[int, ...]) -> SymExpr:
        """The ``t**nu`` coefficient of ``G_k^{(beta)}``."""
        return self.get(k, beta).coeff(nu, 0)


def build_G(phase: PhaseJet, beta_max: int, M: int | None = None) -> GTable:
    """Expand ``d_y^beta e^{i phi/h}`` by the product rule, collecting powers of ``1/h``.

    ``H^{(beta+e_i)}_k = d_{y_i} H^{(beta)}_k + i (d_{y_i} phi) H^{(beta)}_{k-1}``
    with ``H^{(0)}_0 = 1``; ``G = (-i)^{|beta|}/|beta|! * H``.
    """
    d = phase.d
    n = d - 1
    T = (M if M is not None else phase.M) + 1
    phi = phase.series()
    grads = [phi.diff_y(i).mul(SymExpr.const(d, I)) for i in range(1, d)]
    zero = (0,) * n
    H: dict[tuple[int, ...], dict[int, JetSeries]] = {zero: {0: JetSeries.scalar(SymExpr.one(d), T)}}
    for beta in iter_multi_indices(n, beta_max):
        if beta == zero:
            continue
        i, parent = _parent(beta)
        prev = H[parent]
        cur: dict[int, JetSeries] = {}
        for k in range(0, sum(beta) + 1):
            acc = JetSeries(d, {}, T, None)
            if k in prev:
                acc = acc + prev[k].diff_y(i + 1)
            if k - 1 in prev:
                acc = acc + grads[i].mul(prev[k - 1], t_trunc=T)
            if not acc.is_zero():
                cur[k] = acc.truncate(T)
        H[beta] = cur
    entries = {}
    for beta, row in H.items():
        order = sum(beta)
        factor = ComplexRational(Fraction(1, math.factorial(order))) * NEG_I ** order
        for k, series in row.items():
            entries[(k, beta)] = series.mul(SymExpr.const(d, factor))
    return GTable(d, beta_max, T, entries)


@dataclass(frozen=True, eq=False)
class PsiTable:
    """Coefficients of ``h**s d_y^beta`` in the conjugated composition (``t``-series)."""

    d: int
    t_trunc: int
    entries: dict[tuple[int, tuple[int, ...]], JetSeries]

    def items_for(self, s: int):
        return [(beta, ser) for (ss, beta), ser in self.entries.items() if ss == s]


def build_psi(model: ModelSpec, phase: PhaseJet, s_max: int | None = None,
              t_trunc: int | None = None, gtable: GTable | None = None) -> PsiTable:
    """``Psi_{s,beta} = sum c_{alpha,beta} d_eta^alpha m_l G_k^{(alpha-beta)}``
    over ``|alpha| - k + l = s`` with
    ``c_{alpha,beta} = binom(alpha,beta) |alpha-beta|!/|alpha]! (-i)^{|beta|}``.
    """
    d, M = model.d, model.M
    n = d - 1
    s_max = M + 1 if s_max is None else s_max
    T = M + 1 if t_trunc is None else t_trunc
    alpha_max = min(model.eta_degree(), M)
    G = gtable if gtable is not None else build_G(phase, alpha_max, T - 1)
    dm: dict[tuple[int, tuple[int, ...]], JetSeries] = {}
    for (k, l), expr in model.m_table.items():
        for alpha, der in eta_derivatives(expr, alpha_max).items():
            key = (l, alpha)
            piece = JetSeries(d, {(k, 0): der})
            dm[key] = piece if key not in dm else dm[key] + piece
    entries: dict[tuple[int, tuple[int, ...]], JetSeries] = {}
    for (l, alpha), mser in dm.items():
        a_ord = sum(alpha)
        for beta in iter_multi_indices(n, a_ord):
            if not _le(beta, alpha):
                continue
            gamma = tuple(a - b for a, b in zip(alpha, beta))
            g_ord = sum(gamma)
            c = ComplexRational(Fraction(_binom_multi(alpha, beta) * math.factorial(g_ord), math.factorial(a_ord)))
            c = c * NEG_I ** sum(beta)
            for k in range(0, g_ord + 1):
                s = a_ord - k + l
                if s > s_max:
                    continue
                gser = G.get(k, gamma)
                if gser.is_zero():
                    continue
                term = mser.mul(gser, t_trunc=T).mul(SymExpr.const(d, c))
                key = (s, beta)
                entries[key] = term if key not in entries else entries[key] + term
    entries = {key: ser.truncate(T) for key, ser in entries.items() if not ser.is_zero()}
    return PsiTable(d, T, entries)


@dataclass(frozen=True, eq=False)
class AmplitudeJet:
    """Solved ``a_{k,j}`` for ``0 <= k, j <= M``; the cutoff factor is taken as 1."""

    amps: dict[tuple[int, int], SymExpr]
    model: ModelSpec
    phase: PhaseJet
    E: dict[tuple[int, int], SymExpr] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def M(self) -> int:
        return self.model.M

    def a(self, k: int, j: int) -> SymExpr:
        return self.amps.get((k, j)) or SymExpr.zero(self.d)

    def series(self, j: int) -> JetSeries:
        """``a_j(t)`` as an exact polynomial of degree ``<= M``."""
        return JetSeries(self.d, {(k, 0): e for (k, jj), e in self.amps.items() if jj == j})

    def full_series(self) -> JetSeries:
        return JetSeries(self.d, dict(self.amps))

    def replace(self, k: int, j: int, expr: SymExpr) -> AmplitudeJet:
        amps = dict(self.amps)
        amps[(k, j)] = expr
        return AmplitudeJet(amps, self.model, self.phase, self.E)


class _DerivCache:
    def __init__(self, amps: dict):
        self.amps = amps
        self.cache: dict = {}

    def get(self, k: int, j: int, beta: tuple[int, ...]) -> SymExpr:
        key = (k, j, beta)
        if key not in self.cache:
            if not any(beta):
                self.cache[key] = self.amps[(k, j)]
            else:
                i, parent = _parent(beta)
                self.cache[key] = self.get(k, j, parent).diff_y(i + 1)
        return self.cache[key]


def build_E_entry(psi: PsiTable, derivs: _DerivCache, known: set, k: int, j: int) -> SymExpr:
    """``E_{k,j} = sum_{s=1}^{j+1} sum_beta sum_{q<=k} Psi_{s,beta}[t^{k-q}] d^beta a_{q,j+1-s}``."""
    out = SymAccumulator(psi.d)
    for s in range(1, j + 2):
        jj = j + 1 - s
        for beta, ser in psi.items_for(s):
            for (kk, _), coeff in ser.coeffs.items():
                q = k - kk
                if q < 0:
                    continue
                if (q, jj) not in known:
                    raise LookupError(f"E_{k},{j} needs a_{q},{jj} which is not solved yet")
                der = derivs.get(q, jj, beta)
                if not der.is_zero():
                    out.add_product(coeff, der)
    return out.result()


def build_E_table(model: ModelSpec, phase: PhaseJet, partial: AmplitudeJet, j: int,
                  M: int | None = None, psi: PsiTable | None = None) -> dict[int, SymExpr]:
    """Row ``j`` of the E-table from whatever amplitudes ``partial`` holds."""
    M = model.M if M is None else M
    psi = psi if psi is not None else build_psi(model, phase)
    derivs = _DerivCache(partial.amps)
    known = set(partial.amps)
    return {k: build_E_entry(psi, derivs, known, k, j) for k in range(0, M)}


def solve_transport(model: ModelSpec, phase: PhaseJet | None = None,
                    psi: PsiTable | None = None) -> AmplitudeJet:
    """Double recursion: ``j`` ascending, then ``k`` ascending."""
    phase = phase if phase is not None else solve_eikonal(model)
    d, M = model.d, model.M
    psi = psi if psi is not None else build_psi(model, phase)
    phi = [SymExpr.zero(d)] + list(phase.phis) + [SymExpr.zero(d)] * 3
    zero = SymExpr.zero(d)
    amps: dict[tuple[int, int], SymExpr] = {}
    E: dict[tuple[int, int], SymExpr] = {}
    derivs = _DerivCache(amps)
    known: set = set()

    def a(k, j):
        if j < 0 or k > M:
            return zero
        return amps[(k, j)]

    for j in range(0, M + 1):
        amps[(0, j)] = SymExpr.one(d) if j == 0 else zero
        known.add((0, j))
        for k in range(0, M):
            acc = SymAccumulator(d)
            for nu in range(0, k):
                p = phi[k - nu + 1]
                if p:
                    acc.add_product(p, a(nu + 1, j), ComplexRational(0, 2 * (k - nu + 1) * (nu + 1)))
            for nu in range(0, k + 1):
                p = phi[k - nu + 2] if k - nu + 2 <= M else zero
                if p:
                    acc.add_product(p, a(nu, j), ComplexRational(0, (k - nu + 1) * (k - nu + 2)))
            acc.add(a(k, j).diff_y(1), I)
            if j >= 1 and k + 2 <= M:
                acc.add(a(k + 2, j - 1), (k + 1) * (k + 2))
            e = build_E_entry(psi, derivs, known, k, j)
            E[(k, j)] = e
            acc.add(e, -1)
            amps[(k + 1, j)] = acc.result().mul_rho(-1).scale(ComplexRational(0, Fraction(1, 2 * (k + 1))))
            known.add((k + 1, j))
    return AmplitudeJet(amps, model, phase, E)


def conjugated_by_psi(psi: PsiTable, b: JetSeries, t_trunc: int, h_trunc: int,
                      s_min: int = 0) -> JetSeries:
    """``sum_{s >= s_min} h**s sum_beta Psi_{s,beta} d_y^beta b`` as a (t, h) series."""
    d = psi.d
    out = JetSeries(d, {}, t_trunc, h_trunc)
    derivs: dict[tuple[int, ...], JetSeries] = {}

    def der(beta):
        if beta not in derivs:
            if not any(beta):
                derivs[beta] = b
            else:
                i, parent = _parent(beta)
                derivs[beta] = der(parent).diff_y(i + 1)
        return derivs[beta]

    for (s, beta), ser in psi.entries.items():
        if s < s_min or s >= h_trunc:
            continue
        out = out + ser.shift(0, s).mul(der(beta), t_trunc=t_trunc, h_trunc=h_trunc)
    return out.truncate(t_trunc, h_trunc)


def transport_residual(model: ModelSpec, phase: PhaseJet, amps: AmplitudeJet, j: int,
                       t_trunc: int | None = None, psi: PsiTable | None = None) -> JetSeries:
    """``-i phi_tt a_j - 2i phi_t d_t a_j - i d_{y1} a_j - d_t^2 a_{j-1} + E_j`` in ``t``.

    ``E_j`` is rebuilt from series products, not from the stored E-table.
    """
    d, M = model.d, model.M
    T = M if t_trunc is None else t_trunc
    psi = psi if psi is not None else build_psi(model, phase, t_trunc=T)
    phi = phase.series()
    aj = amps.series(j)
    out = phi.dt().dt().mul(aj, t_trunc=T).mul(SymExpr.const(d, NEG_I))
    out = out + phi.dt().mul(aj.dt(), t_trunc=T).mul(SymExpr.const(d, ComplexRational(0, -2)))
    out = out + aj.diff_y(1).mul(SymExpr.const(d, NEG_I))
    if j >= 1:
        out = out - amps.series(j - 1).dt().dt()
    # E_j is the h^{j+1} part of the conjugated composition of sum_{l<=j} h^l a_l
    lower = JetSeries(d, {(k, jj): e for (k, jj), e in amps.amps.items() if jj <= j})
    comp = conjugated_by_psi(psi, lower, T, j + 2, s_min=1)
    out = out + JetSeries(d, {(k, 0): c for (k, jj), c in comp.coeffs.items() if jj == j + 1})
    return out.truncate(T)


@dataclass
class GradingIssue:
    k: int
    j: int
    valuation: float
    bound: int


def check_amp_grading(amps: AmplitudeJet) -> list[GradingIssue]:
    """Entries with lowest rho power below ``-2k-3j``."""
    out = []
    for (k, j), e in sorted(amps.amps.items()):
        if e.rho_valuation() < -2 * k - 3 * j:
            out.append(GradingIssue(k, j, e.rho_valuation(), -2 * k - 3 * j))
    return out


def check_E_grading(amps: AmplitudeJet) -> list[GradingIssue]:
    out = []
    for (k, j), e in sorted(amps.E.items()):
        if e.rho_valuation() < -2 * k - 3 * j:
            out.append(GradingIssue(k, j, e.rho_valuation(), -2 * k - 3 * j))
    return out


@dataclass
class AmpStructureReport:
    k: int
    j: int
    expected: SymExpr
    observed: SymExpr
    lower_changes: list[tuple[int, int]]

    @property
    def passed(self) -> bool:
        return self.expected == self.observed and not self.lower_changes


def amp_response(k: int, j: int, delta: SymExpr) -> SymExpr:
    """``-((k+j)!/k!) delta / (-2i rho)^{j+2}``."""
    d = delta.d
    scale = ComplexRational(Fraction(-math.factorial(k + j), math.factorial(k))) / ComplexRational(0, -2) ** (j + 2)
    return delta.mul_rho(-(j + 2)).scale(scale)


def check_amp_structure(model: ModelSpec, phase: PhaseJet, amps: AmplitudeJet, k: int, j: int,
                        delta: SymExpr) -> AmpStructureReport:
    """Perturb ``m_{k+j,0}`` by ``delta`` and compare the response of ``a_{k,j}``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    target = k + j
    if target > model.M - 1:
        raise ValueError("perturbed order must stay below M")
    from .eikonal import perturb_m_k0
    new_model = perturb_m_k0(model, target, delta)
    new_phase = solve_eikonal(new_model)
    new_amps = solve_transport(new_model, new_phase)
    observed = new_amps.a(k, j) - amps.a(k, j)
    lower = [(kk, jj) for (kk, jj) in sorted(amps.amps)
             if kk + jj < target and new_amps.a(kk, jj) != amps.a(kk, jj)]
    return AmpStructureReport(k, j, amp_response(k, j, delta), observed, lower)


@dataclass
class AmpScalingReport:
    k: int
    j: int
    mus: np.ndarray
    sup_abs: np.ndarray
    slope: float
    bound_slope: float
    c_min: float
    c_max: float

    @property
    def passed(self) -> bool:
        if not np.any(self.sup_abs > 0):
            return True
        return self.slope >= self.bound_slope - 0.1


def check_amp_scaling_numeric(amps: AmplitudeJet, k: int, j: int, mus: Sequence[float] | None = None,
                              n_y: int = 64, seed: int = 0) -> AmpScalingReport:
    """Fit ``log sup_y |a_{k,j}|`` against ``log mu`` at ``eta1 = 0``.

    The symbol class predicts ``|a_{k,j}| <= C mu^{-k-3j/2}``.
    """
    mus = np.geomspace(0.05, 1.0, 12) if mus is None else np.asarray(mus, float)
    d = amps.d
    rng = np.random.default_rng(seed)
    ys = list(rng.uniform(-1.0, 1.0, size=(d - 1, n_y)))
    tail = list(rng.uniform(-1.0, 1.0, size=(d - 2, n_y)))
    f = NumericExpr(amps.a(k, j))
    sup = np.empty(len(mus))
    for i, mu in enumerate(mus):
        rho = rho_value(np.zeros(n_y), np.full(n_y, mu))
        sup[i] = np.max(np.abs(f(rho, np.full(n_y, mu), ys, tail)))
    expo = -(k + 1.5 * j)
    if np.all(sup > 0):
        slope = float(np.polyfit(np.log(mus), np.log(sup), 1)[0])
    else:
        slope = float("inf") if not np.any(sup > 0) else float("nan")
    cs = sup * mus ** (-expo)
    return AmpScalingReport(k, j, mus, sup, slope, expo, float(cs.min()), float(cs.max()))


__all__ = [
    "GTable", "build_G", "PsiTable", "build_psi", "AmplitudeJet", "build_E_table", "solve_transport",
    "transport_residual", "conjugated_by_psi", "check_amp_grading", "check_E_grading",
    "check_amp_structure", "amp_response", "check_amp_scaling_numeric",
]
