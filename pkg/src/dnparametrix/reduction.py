"""From boundary data to model coefficients.

Boundary data are the Taylor coefficients in the normal variable of the
refraction index ``n`` and tangential symbol ``r``, plus the first-order
terms ``q`` and potential ``V``.  The normal-form coefficients ``p_{k,j}`` are
pulled back along a flat canonical map ``kappa`` that sends the glancing
sphere ``|xi'|^2 = n0`` to ``{eta1 = 0}``.

Data may be exact (``Fraction`` constants, radial polynomials in
``|xi'|^2``) or arbitrary callables.  Exact data keeps the whole pipeline
symbolic; anything else falls back to numeric evaluation and sets a flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Union

import numpy as np

from .eikonal import ModelSpec, solve_eikonal
from .symring import ComplexRational, I, SymExpr
from .transport import solve_transport


@dataclass(frozen=True)
class RadialPoly:
    """``sum_p coeffs[p] |xi'|^{2p}`` with rational coefficients, independent of ``x'``."""

    coeffs: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(Fraction(c) for c in self.coeffs))

    def __call__(self, x, xi):
        s = np.sum(np.asarray(xi, dtype=float) ** 2, axis=0)
        return sum(float(c) * s ** p for p, c in enumerate(self.coeffs))

    def is_zero(self) -> bool:
        return not any(self.coeffs)


Datum = Union[Fraction, int, RadialPoly, Callable]


def _is_exact(v) -> bool:
    return isinstance(v, (Fraction, int, RadialPoly))


def _numeric(v, with_xi: bool):
    """Uniform callable ``f(x, xi)`` for any datum."""
    if isinstance(v, (Fraction, int)):
        c = float(v)
        return lambda x, xi: c + 0.0 * np.asarray(x, dtype=float)[0]
    if isinstance(v, RadialPoly):
        return v
    if with_xi:
        return v
    return lambda x, xi: v(x)


def _rational_sqrt(q: Fraction) -> Fraction | None:
    q = Fraction(q)
    if q < 0:
        return None
    a, b = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if a * a == q.numerator and b * b == q.denominator:
        return Fraction(a, b)
    return None


@dataclass(frozen=True)
class BoundaryData:
    """Flat boundary data with ``r_0 = |xi'|^2`` and constant ``n0``.

    ``n_table[k]`` for ``k >= 1`` depends on ``x'``; ``r_table[k]`` on ``(x', xi')``.
    ``q_flat_table`` and ``V_table`` are indexed by ``k >= 0``.
    """

    dim: int
    n0: Fraction | float
    n_table: Mapping[int, Datum] = field(default_factory=dict)
    r_table: Mapping[int, Datum] = field(default_factory=dict)
    q_sharp0: Datum = Fraction(0)
    q_flat_table: Mapping[int, Datum] = field(default_factory=dict)
    V_table: Mapping[int, Datum] = field(default_factory=dict)
    mu: Fraction | float = Fraction(1, 2)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only one or two tangential dimensions are supported")
        if not float(self.n0) > 0:
            raise ValueError("n0 must be positive")
        if not 0 < abs(float(self.mu)) <= 1:
            raise ValueError("need 0 < |mu| <= 1")
        if 0 in self.n_table or 0 in self.r_table:
            raise ValueError("n0 and r0 are fixed by the flat normalisation")

    @property
    def d(self) -> int:
        return self.dim + 1

    @property
    def z(self) -> complex:
        return complex(1.0, float(self.mu))

    def z_symbolic(self) -> SymExpr:
        return SymExpr.one(self.d) + SymExpr.mu(self.d).scale(I)

    def sqrt_n0(self) -> Fraction | None:
        return _rational_sqrt(self.n0) if isinstance(self.n0, (Fraction, int)) else None

    def is_exact(self) -> bool:
        tables = list(self.n_table.values()) + list(self.r_table.values())
        tables += list(self.q_flat_table.values()) + list(self.V_table.values()) + [self.q_sharp0]
        return self.sqrt_n0() is not None and all(_is_exact(v) for v in tables)

    def check_n0(self, samples: np.ndarray | None = None) -> None:
        if float(self.n0) <= 0:
            raise ValueError("n0 must be positive")

    def with_n(self, k: int, value: Datum) -> BoundaryData:
        table = dict(self.n_table)
        table[k] = value
        return BoundaryData(self.dim, self.n0, table, self.r_table, self.q_sharp0, self.q_flat_table,
                            self.V_table, self.mu)


@dataclass
class PCoeff:
    """One ``p_{k,j}``: always a numeric ``f(x', xi')``; exact data also gives the pullback in ``(y, eta)``."""

    numeric: Callable
    pulled_back: SymExpr | None = None


@dataclass
class NormalFormCoeffs:
    bd: BoundaryData
    p_table: dict[tuple[int, int], PCoeff]

    @property
    def symbolic(self) -> bool:
        return all(c.pulled_back is not None for c in self.p_table.values())


def _radial_to_model(v: Datum, bd: BoundaryData) -> SymExpr:
    """Exact datum composed with the inverse flat map: ``|xi'|^2 = n0 (1 + eta1)``."""
    d = bd.d
    if isinstance(v, (Fraction, int)):
        return SymExpr.const(d, Fraction(v))
    s = (SymExpr.one(d) + SymExpr.eta(d, 1)).scale(Fraction(bd.n0))
    out, power = SymExpr.zero(d), SymExpr.one(d)
    for c in v.coeffs:
        if c:
            out = out + power.scale(c)
        power = power * s
    return out


def compute_p(bd: BoundaryData, k_max: int) -> NormalFormCoeffs:
    """``p_{k,j}`` for ``j <= 2`` with the commutator corrections taken as zero and ``psi = 1``.

        p_{k,0} = (r_k - z n_k) n0^{-(k+2)/2} / k!            (k >= 1; p_{0,0} = 0)
        p_{k,1} = -i q_k n0^{-(k+2)/2} / k!,  p_{0,1} = -i q_0 / n0
        p_{k,2} = -V_k n0^{-(k+2)/2} / k!,    p_{0,2} = -V_0 / n0
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    bd.check_n0()
    d = bd.d
    exact = bd.sqrt_n0() is not None
    root = bd.sqrt_n0()
    n0f = float(bd.n0)
    z = bd.z
    zero = SymExpr.zero(d)
    table: dict[tuple[int, int], PCoeff] = {}
    table[(0, 0)] = PCoeff(lambda x, xi: 0.0 * np.asarray(x, dtype=float)[0], zero)

    def weight(k):
        w = n0f ** (-(k + 2) / 2) / math.factorial(k)
        wq = (1 / root ** (k + 2)) / math.factorial(k) if exact else None
        return w, wq

    for k in range(1, k_max + 1):
        w, wq = weight(k)
        rk = bd.r_table.get(k, Fraction(0))
        nk = bd.n_table.get(k, Fraction(0))
        fr, fn = _numeric(rk, True), _numeric(nk, False)
        numeric = (lambda fr, fn, w: lambda x, xi: w * (fr(x, xi) - z * fn(x, xi)))(fr, fn, w)
        sym = None
        if exact and _is_exact(rk) and _is_exact(nk):
            sym = (_radial_to_model(rk, bd) - bd.z_symbolic() * _radial_to_model(nk, bd)).scale(wq)
        table[(k, 0)] = PCoeff(numeric, sym)

    for j, src, factor in ((1, bd.q_flat_table, -1j), (2, bd.V_table, -1.0)):
        exact_factor = ComplexRational(0, -1) if j == 1 else ComplexRational(-1)
        for k in range(0, k_max + 1):
            v = src.get(k, Fraction(0))
            if k == 0:
                w, wq = 1 / n0f, (1 / Fraction(bd.n0))
            else:
                w, wq = weight(k)
            fv = _numeric(v, False)
            numeric = (lambda fv, w: lambda x, xi: factor * w * fv(x, xi))(fv, w)
            sym = None
            if wq is not None and _is_exact(v):
                sym = _radial_to_model(v, bd).scale(exact_factor).scale(wq)
            table[(k, j)] = PCoeff(numeric, sym)
    return NormalFormCoeffs(bd, table)


# -- the flat canonical map --------------------------------------------------

@dataclass(frozen=True)
class FlatKappa:
    """``(x', xi') -> (y, eta)`` with ``eta1 = |xi'|^2/n0 - 1``.

    Generated by ``S(x, eta) = <x, Xi(eta)>`` where ``Xi(eta) = R(eta1) e(eta2)``,
    ``R = sqrt(n0 (1 + eta1))`` and ``e`` the unit vector at angle ``eta2``
    (one tangential dimension: ``Xi = R``).  Hence ``xi = Xi(eta)`` and
    ``y = DXi(eta)^T x``.  Defined for ``xi' != 0``; in one dimension on ``xi' > 0``.
    """

    n0: float
    dim: int = 1

    def Xi(self, eta):
        eta = np.asarray(eta, dtype=float)
        R = np.sqrt(self.n0 * (1.0 + eta[0]))
        if self.dim == 1:
            return R[None]
        return np.stack([R * np.cos(eta[1]), R * np.sin(eta[1])])

    def DXi(self, eta):
        """Jacobian ``d Xi_a / d eta_b`` with shape ``(dim, dim, ...)``."""
        eta = np.asarray(eta, dtype=float)
        R = np.sqrt(self.n0 * (1.0 + eta[0]))
        dR = self.n0 / (2.0 * R)
        if self.dim == 1:
            return dR[None, None]
        c, s = np.cos(eta[1]), np.sin(eta[1])
        return np.array([[dR * c, -R * s], [dR * s, R * c]])

    def eta_of(self, xi):
        xi = np.asarray(xi, dtype=float)
        sq = np.sum(xi ** 2, axis=0)
        if np.any(sq == 0):
            raise ValueError("xi' = 0 lies outside the glancing neighbourhood")
        eta1 = sq / self.n0 - 1.0
        if self.dim == 1:
            if np.any(xi[0] < 0):
                raise ValueError("one-dimensional branch requires xi' > 0")
            return eta1[None]
        return np.stack([eta1, np.arctan2(xi[1], xi[0])])

    def forward(self, x, xi):
        x = np.asarray(x, dtype=float)
        eta = self.eta_of(xi)
        D = self.DXi(eta)
        y = np.einsum("ab...,a...->b...", D, x)
        return y, eta

    def inverse(self, y, eta):
        y = np.asarray(y, dtype=float)
        eta = np.asarray(eta, dtype=float)
        D = self.DXi(eta)
        if self.dim == 1:
            x = y / D[0, 0]
        else:
            Dt = np.moveaxis(D, (0, 1), (-1, -2))
            x = np.moveaxis(np.linalg.solve(Dt, np.moveaxis(y, 0, -1)[..., None])[..., 0], -1, 0)
        return x, self.Xi(eta)


def flat_kappa(xi_prime, n0: float):
    """``eta1`` and the Jacobian ``DXi`` at the image point for a single covector ``xi'``."""
    xi = np.atleast_1d(np.asarray(xi_prime, dtype=float))
    kap = FlatKappa(float(n0), xi.shape[0])
    eta = kap.eta_of(xi)
    return float(eta[0]), kap.DXi(eta)


def symplectic_defect(kap: FlatKappa, x, xi, step: float = 1e-3) -> float:
    """``max |J^T Omega J - Omega|`` with ``J`` from fourth-order central differences."""
    z0 = np.concatenate([np.asarray(x, float), np.asarray(xi, float)])
    n = kap.dim

    def F(z):
        y, eta = kap.forward(z[:n], z[n:])
        return np.concatenate([np.ravel(y), np.ravel(eta)])

    J = np.zeros((2 * n, 2 * n))
    for c in range(2 * n):
        e = np.zeros(2 * n)
        e[c] = step
        J[:, c] = (-F(z0 + 2 * e) + 8 * F(z0 + e) - 8 * F(z0 - e) + F(z0 - 2 * e)) / (12 * step)
    # coordinates ordered (x, xi) -> (y, eta); the form is dxi^dx resp. deta^dy
    Om = np.block([[np.zeros((n, n)), -np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    return float(np.max(np.abs(J.T @ Om @ J - Om)))


# -- model coefficients -----------------------------------------------------------

@dataclass
class TransformResult:
    model: ModelSpec | None
    numeric: dict[int, Callable]
    symbolic: bool


def transform_m(p: NormalFormCoeffs, kappa: FlatKappa | None = None, k_max: int | None = None,
                M: int = 4) -> TransformResult:
    """``m_{k,0} = p_{k,0}`` pulled back to ``(y, eta)``; ``m_{k,j}`` with ``j >= 1`` stay unset."""
    bd = p.bd
    kappa = kappa if kappa is not None else FlatKappa(float(bd.n0), bd.dim)
    ks = sorted(k for (k, j) in p.p_table if j == 0)
    if k_max is not None:
        ks = [k for k in ks if k <= k_max]
    numeric = {}
    for k in ks:
        f = p.p_table[(k, 0)].numeric
        numeric[k] = (lambda f: lambda y, eta: f(*kappa.inverse(y, eta)))(f)
    entries = {k: p.p_table[(k, 0)].pulled_back for k in ks}
    symbolic = all(e is not None for e in entries.values())
    model = None
    if symbolic:
        if not entries.get(0, SymExpr.zero(bd.d)).is_zero():
            raise AssertionError("m_{0,0} must vanish")
        table = {(k, 0): e for k, e in entries.items() if k >= 1 and k <= M}
        model = ModelSpec(bd.d, M, table, Fraction(bd.mu), name="reduced")
    return TransformResult(model, numeric, symbolic)


@dataclass(frozen=True)
class GaugeCorrection:
    """``(ih/2) q#(0, x')`` added to the model DN, and the ``n0^{1/2}`` prefactor."""

    h: float
    q_sharp0: Datum
    prefactor: float

    def multiplier(self, x=None):
        if callable(self.q_sharp0) and not isinstance(self.q_sharp0, (Fraction, int, RadialPoly)):
            return 0.5j * self.h * np.asarray(self.q_sharp0(x), dtype=complex)
        return 0.5j * self.h * float(self.q_sharp0)


def gauge_correction(bd: BoundaryData, h: float) -> GaugeCorrection:
    return GaugeCorrection(h, bd.q_sharp0, math.sqrt(float(bd.n0)))


# -- DN symbol at the boundary -------------------------------------------------

def reduced_dn_series(bd: BoundaryData, s: int, M: int | None = None) -> dict[int, SymExpr]:
    """Exact ``h``-coefficients of ``n0^{1/2} N~_{s,0}`` without the window factor.

    ``N~_{s,0} = rho - i sum_{j<s} h^{j+1} a_{1,j}`` for the model obtained
    from ``bd``; requires exact data.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    root = bd.sqrt_n0()
    if root is None or not bd.is_exact():
        raise ValueError("exact boundary data with a rational square n0 are required")
    M = s + 3 if M is None else M
    res = transform_m(compute_p(bd, M), M=M)
    model = res.model
    amps = solve_transport(model, solve_eikonal(model))
    out = {0: SymExpr.rho(bd.d, 1).scale(root)}
    for j in range(s):
        out[j + 1] = amps.a(1, j).scale(ComplexRational(0, -1)).scale(root)
    return {k: v for k, v in out.items() if not v.is_zero()}


def independence_term(bd: BoundaryData, s: int, delta: Fraction) -> SymExpr:
    """``c_s rho^{-s-1} z delta n0^{-(s+1)/2}`` with ``c_s = -i (-2i)^{-s-1}`` (coefficient of ``h^s``)."""
    root = bd.sqrt_n0()
    if root is None:
        raise ValueError("n0 must be a rational square")
    c_s = ComplexRational(0, -1) * ComplexRational(0, -2) ** (-(s + 1))
    return (bd.z_symbolic() * SymExpr.rho(bd.d, -(s + 1))).scale(c_s).scale(Fraction(delta)).scale(1 / root ** (s + 1))


__all__ = [
    "RadialPoly", "BoundaryData", "PCoeff", "NormalFormCoeffs", "compute_p", "FlatKappa", "flat_kappa",
    "symplectic_defect", "TransformResult", "transform_m", "GaugeCorrection", "gauge_correction",
    "reduced_dn_series", "independence_term",
]
