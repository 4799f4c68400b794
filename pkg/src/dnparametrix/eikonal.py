"""Phase jet of the model parametrix.

The phase is ``phi = sum_{k=1..M} t**k phi_k`` with ``phi_1 = rho``.  Each
higher coefficient comes from the ``t**K`` coefficient of the eikonal
equation

    (d_t phi)**2 + d_{y1} phi - rho**2 + g(m_0, phi) = O(t**M),
    g = sum_alpha d_eta^alpha m_0 * prod_i (d_{y_i} phi)**alpha_i / |alpha|!

which is linear in the unknown through ``2 (K+1) rho phi_{K+1}``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .symring import ComplexRational, I, JetSeries, NumericExpr, SymExpr, iter_multi_indices, rho_value


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Coefficients ``m_{k,j}`` of ``m ~ sum t**k h**j m_{k,j}``.

    ``mu`` is only the nominal numeric value; the symbolic layer keeps ``mu``
    as an indeterminate so every jet stays valid for any ``mu != 0``.
    """

    d: int
    M: int
    m_table: Mapping[tuple[int, int], SymExpr]
    mu: Fraction = Fraction(1, 2)
    name: str = "model"

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.M < 1:
            raise ValueError("truncation order M must be positive")
        if Fraction(self.mu) == 0:
            raise ValueError("mu must be nonzero")
        table = {}
        for (k, j), expr in dict(self.m_table).items():
            if k < 0 or j < 0:
                raise ValueError("negative index in m_table")
            if expr.d != self.d:
                raise ValueError(f"m_{k},{j} has dimension {expr.d}, expected {self.d}")
            if not expr.is_polynomial_in_eta1():
                raise ValueError(f"m_{k},{j} is not polynomial in eta1 (odd or negative rho power)")
            if expr.is_zero():
                continue
            if (k, j) == (0, 0):
                raise ValueError("m_{0,0} must vanish identically")
            table[(k, j)] = expr
        object.__setattr__(self, "m_table", table)
        object.__setattr__(self, "mu", Fraction(self.mu))

    def m(self, k: int, j: int) -> SymExpr:
        return self.m_table.get((k, j)) or SymExpr.zero(self.d)

    def h_orders(self) -> list[int]:
        return sorted({j for _, j in self.m_table})

    def t_series(self, j: int) -> JetSeries:
        """``m_j(t)`` as an exact polynomial in ``t``."""
        return JetSeries(self.d, {(k, 0): e for (k, jj), e in self.m_table.items() if jj == j})

    def full_series(self) -> JetSeries:
        return JetSeries(self.d, dict(self.m_table))

    def with_entry(self, k: int, j: int, expr: SymExpr) -> ModelSpec:
        table = dict(self.m_table)
        table[(k, j)] = expr
        return ModelSpec(self.d, self.M, table, self.mu, self.name)

    def with_M(self, M: int) -> ModelSpec:
        return ModelSpec(self.d, M, self.m_table, self.mu, self.name)

    def truncated(self, k_max: int, j_max: int) -> ModelSpec:
        table = {(k, j): e for (k, j), e in self.m_table.items() if k <= k_max and j <= j_max}
        return ModelSpec(self.d, self.M, table, self.mu, self.name)

    def specialize_mu(self) -> ModelSpec:
        """Copy with ``mu`` replaced by its nominal rational value in every entry."""
        table = {kj: e.subs_mu(self.mu) for kj, e in self.m_table.items()}
        return ModelSpec(self.d, self.M, table, self.mu, self.name + f"[mu={self.mu}]")

    def eta_degree(self) -> int:
        names = ["eta1"] + [f"eta{i}" for i in range(2, self.d)]
        return max((e.max_degree(n) for e in self.m_table.values() for n in names), default=0)

    def is_y_independent(self) -> bool:
        return all(not e.diff_y(i) for e in self.m_table.values() for i in range(1, self.d))

    def is_eta_independent(self) -> bool:
        return all(not e.diff_eta(i) for e in self.m_table.values() for i in range(1, self.d))


def zero_model(d: int = 2, M: int = 4) -> ModelSpec:
    return ModelSpec(d, M, {}, name="zero")


def airy_model(c=1, d: int = 2, M: int = 4, mu=Fraction(1, 2)) -> ModelSpec:
    """``m = c t``: the glancing model whose exact solution is an Airy function."""
    return ModelSpec(d, M, {(1, 0): SymExpr.const(d, c)}, mu, name=f"airy(c={c})")


def random_model(seed: int, d: int = 2, M: int = 8, k_max: int = 3, j_max: int = 1,
                 max_terms: int = 3) -> ModelSpec:
    """Seeded sparse model with entries of degree <= 2 in (y, eta).

    Entries with ``j = 0`` get real coefficients plus an imaginary part
    proportional to ``mu``, matching the assumption Im m_0 = O(mu).
    """
    rng = random.Random(seed)
    variables = [SymExpr.y(d, i) for i in range(1, d)] + [SymExpr.eta(d, i) for i in range(1, d)]

    def small_fraction():
        num = rng.choice([-3, -2, -1, 1, 2, 3])
        return Fraction(num, rng.choice([1, 2, 3, 4]))

    def random_entry(real_part_only: bool) -> SymExpr:
        out = SymExpr.zero(d)
        for _ in range(rng.randint(1, max_terms)):
            deg = rng.choice([0, 1, 1, 2])
            mono = SymExpr.one(d)
            for _ in range(deg):
                mono = mono * rng.choice(variables)
            coeff = small_fraction()
            if real_part_only:
                term = mono.scale(coeff)
                if rng.random() < 0.4:
                    term = term + (mono * SymExpr.mu(d)).scale(ComplexRational(0, small_fraction()))
            else:
                term = mono.scale(ComplexRational(coeff, small_fraction() if rng.random() < 0.5 else 0))
            out = out + term
        return out

    table = {(1, 0): random_entry(True)}
    for k in range(0, k_max + 1):
        for j in range(0, j_max + 1):
            if (k, j) in {(0, 0), (1, 0)}:
                continue
            if rng.random() < 0.5:
                table[(k, j)] = random_entry(j == 0)
    return ModelSpec(d, M, table, Fraction(1, 2), name=f"random(seed={seed},d={d})")


def eta_derivatives(expr: SymExpr, max_order: int) -> dict[tuple[int, ...], SymExpr]:
    """All nonzero ``d_eta^alpha expr`` with ``|alpha| <= max_order``."""
    n = expr.d - 1
    out: dict[tuple[int, ...], SymExpr] = {}
    if expr.is_zero():
        return out
    out[(0,) * n] = expr
    for alpha in iter_multi_indices(n, max_order):
        if sum(alpha) == 0:
            continue
        i = next(ax for ax, e in enumerate(alpha) if e)
        parent = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]
        src = out.get(parent)
        if src is None:
            continue
        der = src.diff_eta(i + 1)
        if not der.is_zero():
            out[alpha] = der
    return out


@dataclass(frozen=True, eq=False)
class PhaseJet:
    """Solved coefficients ``phi_1..phi_M`` (``phis[0]`` is ``phi_1``)."""

    phis: tuple[SymExpr, ...]
    model: ModelSpec

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def M(self) -> int:
        return len(self.phis)

    def phi(self, k: int) -> SymExpr:
        if 1 <= k <= len(self.phis):
            return self.phis[k - 1]
        return SymExpr.zero(self.d)

    def series(self) -> JetSeries:
        return JetSeries(self.d, {(k, 0): p for k, p in enumerate(self.phis, start=1)})

    def replace(self, k: int, expr: SymExpr) -> PhaseJet:
        phis = list(self.phis)
        phis[k - 1] = expr
        return PhaseJet(tuple(phis), self.model)


class _PowerProducts:
    """Coefficients ``[t^n] prod_i (d_{y_i} phi)**alpha_i`` computed on demand."""

    def __init__(self, d: int, phis: list[SymExpr]):
        self.d = d
        self.phis = phis
        self.grad: dict[tuple[int, int], SymExpr] = {}
        self.cache: dict[tuple[tuple[int, ...], int], SymExpr] = {}

    def grad_coeff(self, i: int, k: int) -> SymExpr:
        key = (i, k)
        if key not in self.grad:
            p = self.phis[k] if 0 < k < len(self.phis) else None
            if p is None:
                raise LookupError(f"phi_{k} is not yet known")
            self.grad[key] = p.diff_y(i + 1)
        return self.grad[key]

    def coeff(self, alpha: tuple[int, ...], n: int) -> SymExpr:
        key = (alpha, n)
        if key in self.cache:
            return self.cache[key]
        order = sum(alpha)
        if order == 0:
            out = SymExpr.one(self.d) if n == 0 else SymExpr.zero(self.d)
        elif n < order:
            out = SymExpr.zero(self.d)
        else:
            i = next(ax for ax, e in enumerate(alpha) if e)
            parent = alpha[:i] + (alpha[i] - 1,) + alpha[i + 1:]
            out = SymExpr.zero(self.d)
            # the factor contributes t^a with a >= 1, the rest at least t^(order-1)
            for a in range(1, n - (order - 1) + 1):
                g = self.grad_coeff(i, a)
                if g.is_zero():
                    continue
                rest = self.coeff(parent, n - a)
                if not rest.is_zero():
                    out = out + g * rest
        self.cache[key] = out
        return out


def solve_eikonal(model: ModelSpec) -> PhaseJet:
    """Solve for ``phi_1..phi_M`` order by order."""
    d, M = model.d, model.M
    rho = SymExpr.rho(d)
    phis: list[SymExpr | None] = [SymExpr.zero(d), rho]
    eta_order = model.eta_degree()
    dm = {nu: eta_derivatives(model.m(nu, 0), min(eta_order, M)) for nu in range(1, M)}
    products = _PowerProducts(d, phis)
    zero_alpha = (0,) * (d - 1)

    for K in range(1, M):
        acc = SymExpr.zero(d)
        # (d_t phi)^2 without the two terms holding phi_{K+1}
        for k in range(1, K // 2 + 1):
            other = K - k
            if other < 1:
                continue
            term = phis[k + 1] * phis[other + 1]
            weight = (k + 1) * (other + 1) * (1 if k == other else 2)
            acc = acc + term.scale(weight)
        acc = acc + phis[K].diff_y(1)
        acc = acc + model.m(K, 0)
        for nu in range(1, K):
            for alpha, der in dm[nu].items():
                order = sum(alpha)
                if alpha == zero_alpha or order > K - nu:
                    continue
                v = products.coeff(alpha, K - nu)
                if not v.is_zero():
                    acc = acc + (der * v).scale(Fraction(1, math.factorial(order)))
        phis.append(acc.mul_rho(-1).scale(Fraction(-1, 2 * (K + 1))))
    return PhaseJet(tuple(phis[1:M + 1]), model)


def g_series(model: ModelSpec, phase: PhaseJet, t_trunc: int | None) -> JetSeries:
    """``g(m_0, phi)`` built from series arithmetic (independent of the solver)."""
    d = model.d
    phi = phase.series()
    grads = [phi.diff_y(i) for i in range(1, d)]
    m0 = model.t_series(0)
    out = JetSeries(d, {}, t_trunc, None)
    eta_order = model.eta_degree()
    derivs: dict[tuple[int, ...], JetSeries] = {}
    for (k, j), expr in model.m_table.items():
        if j:
            continue
        for alpha, der in eta_derivatives(expr, eta_order).items():
            prev = derivs.get(alpha)
            piece = JetSeries(d, {(k, 0): der})
            derivs[alpha] = piece if prev is None else prev + piece
    del m0
    for alpha, der in derivs.items():
        prod = JetSeries.scalar(SymExpr.one(d))
        for i, e in enumerate(alpha):
            for _ in range(e):
                prod = prod.mul(grads[i], t_trunc=t_trunc)
        out = out + der.mul(prod, t_trunc=t_trunc).mul(SymExpr.const(d, Fraction(1, math.factorial(sum(alpha)))))
    return out.truncate(t_trunc)


def eikonal_residual(phase: PhaseJet, t_trunc: int | None = None) -> JetSeries:
    """Left side of the eikonal equation as a series in ``t``.

    ``t_trunc`` defaults to ``M``; pass a larger value to see the first
    nonvanishing remainder orders.
    """
    model = phase.model
    d = model.d
    T = model.M if t_trunc is None else t_trunc
    phi = phase.series()
    dphi = phi.dt()
    lhs = dphi.mul(dphi, t_trunc=T) + phi.diff_y(1) - SymExpr.rho(d, 2)
    return (lhs + g_series(model, phase, T)).truncate(T)


@dataclass
class GradingEntry:
    k: int
    alpha: tuple[int, ...]
    valuation: float
    degree: float
    bound: int

    @property
    def ok(self) -> bool:
        return self.valuation >= self.bound


@dataclass
class GradingReport:
    entries: list[GradingEntry] = field(default_factory=list)

    @property
    def violations(self) -> list[GradingEntry]:
        return [e for e in self.entries if not e.ok]

    @property
    def passed(self) -> bool:
        return not self.violations


def check_phase_grading(phase: PhaseJet, max_y_order: int = 3) -> GradingReport:
    """Check ``d_y^alpha phi_k`` lies in S^{3-2k}(|rho|) for ``|alpha| <= max_y_order``.

    Membership is tested by the lowest rho power (``rho_valuation``), since
    ``|rho|`` stays bounded on the support of the cutoff.
    """
    report = GradingReport()
    n = phase.d - 1
    for k, p in enumerate(phase.phis, start=1):
        for alpha in iter_multi_indices(n, max_y_order):
            der = p.diff_multi_y(alpha)
            report.entries.append(GradingEntry(k, alpha, der.rho_valuation(), der.rho_degree(), 3 - 2 * k))
    return report


@dataclass
class ImPhaseReport:
    delta: float
    n_samples: int
    violations: int
    worst_margin: float
    first_violation: dict | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0


def sample_points(d: int, n: int, rng: np.random.Generator, eta1_range=(-0.5, 0.5),
                  mu_range=(0.05, 1.0)) -> dict[str, np.ndarray]:
    ys = rng.uniform(-1.0, 1.0, size=(d - 1, n))
    etas = rng.uniform(-1.0, 1.0, size=(d - 2, n))
    eta1 = rng.uniform(*eta1_range, size=n)
    mu = np.exp(rng.uniform(np.log(mu_range[0]), np.log(mu_range[1]), size=n))
    return {"y": ys, "eta_tail": etas, "eta1": eta1, "mu": mu}


def check_im_phase(phase: PhaseJet, delta: float = 0.05, n_samples: int = 10_000, seed: int = 0,
                   mu_range=(0.05, 1.0)) -> ImPhaseReport:
    """Sample ``0 < t <= 2 delta |rho|^2`` and test ``Im phi >= t Im rho / 2``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    rng = np.random.default_rng(seed)
    pts = sample_points(phase.d, n_samples, rng, mu_range=mu_range)
    rho = rho_value(pts["eta1"], pts["mu"])
    t = 2.0 * delta * np.abs(rho) ** 2 * (1.0 - rng.uniform(0.0, 1.0, size=n_samples))
    phi = np.zeros(n_samples, dtype=complex)
    for k, p in enumerate(phase.phis, start=1):
        phi += t ** k * NumericExpr(p)(rho, pts["mu"], list(pts["y"]), list(pts["eta_tail"]))
    margin = phi.imag - 0.5 * t * rho.imag
    bad = np.flatnonzero(margin < 0)
    first = None
    if bad.size:
        i = int(bad[0])
        first = {"t": float(t[i]), "eta1": float(pts["eta1"][i]), "mu": float(pts["mu"][i]),
                 "y": pts["y"][:, i].tolist(), "im_phi": float(phi[i].imag),
                 "bound": float(0.5 * t[i] * rho[i].imag)}
    scaled = margin / (t * rho.imag)
    return ImPhaseReport(delta, n_samples, int(bad.size), float(scaled.min()), first)


def largest_passing_delta(phase: PhaseJet, candidates: Sequence[float] = (1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01),
                          n_samples: int = 2000, seed: int = 0) -> float | None:
    """Largest candidate ``delta`` with no sampled violation of the Im-phase bound."""
    for delta in sorted(candidates, reverse=True):
        if check_im_phase(phase, delta, n_samples, seed).passed:
            return delta
    return None


def perturb_m_k0(model: ModelSpec, k: int, delta_m: SymExpr) -> ModelSpec:
    """Return ``model`` with ``m_{k,0}`` replaced by ``m_{k,0} + delta_m``."""
    if k < 1:
        raise ValueError("m_{0,0} must stay zero; perturb k >= 1 only")
    return model.with_entry(k, 0, model.m(k, 0) + delta_m)


@dataclass
class PhaseStructureReport:
    K: int
    expected: SymExpr
    observed: SymExpr
    lower_changes: list[int]

    @property
    def passed(self) -> bool:
        return self.expected == self.observed and not self.lower_changes


def phase_response(K: int, delta: SymExpr) -> SymExpr:
    """``-delta / (2 (K+1) rho)``."""
    return delta.mul_rho(-1).scale(Fraction(-1, 2 * (K + 1)))


def check_phase_structure(model: ModelSpec, phase: PhaseJet, K: int, delta: SymExpr) -> PhaseStructureReport:
    """Perturb ``m_{K,0}`` and compare ``phi_{K+1}``; ``phi_1..phi_K`` must not move."""
    if not 1 <= K <= model.M - 1:
        raise ValueError("need 1 <= K <= M-1")
    new = solve_eikonal(perturb_m_k0(model, K, delta))
    lower = [k for k in range(1, K + 1) if new.phi(k) != phase.phi(k)]
    return PhaseStructureReport(K, phase_response(K, delta), new.phi(K + 1) - phase.phi(K + 1), lower)


__all__ = [
    "PhaseStructureReport", "phase_response", "check_phase_structure",
    "ModelSpec", "PhaseJet", "zero_model", "airy_model", "random_model", "eta_derivatives",
    "solve_eikonal", "eikonal_residual", "check_phase_grading", "check_im_phase",
    "largest_passing_delta", "perturb_m_k0", "GradingReport", "ImPhaseReport", "I",
]
