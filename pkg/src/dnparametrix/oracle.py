"""Reference solvers for the model boundary value problem.

Per frequency the model problem is the two-point problem

    -h^2 u'' + (eta1 - i mu + m(t)) u = 0 on (0, T),  u(0) = f,  u(T) = 0,

and the DN value is ``-ih u'(0)``.  Three independent references live here:
the closed form for ``m = c t`` through the Airy function, a Numerov solve on
a stretched grid, and a block Numerov solve for ``y``-dependent ``m`` on a
small Fourier grid.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np
from scipy.linalg import LinAlgError, solve_banded
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .symring import NumericExpr, rho_value


class OracleError(RuntimeError):
    """Base class for reference-solver failures."""


class UnderResolvedError(OracleError):
    pass


class SingularSystemError(OracleError):
    pass


# -- Airy function ---------------------------------------------------------

AIRY_SWITCH_RADIUS = 8.0
_OMEGA = cmath.exp(2j * math.pi / 3)
_SERIES_DPS = 40


def _airy_series(z: complex) -> tuple[complex, complex]:
    """Maclaurin series for (Ai, Ai') in extended precision."""
    with mpmath.workdps(_SERIES_DPS):
        z = mpmath.mpc(z)
        c1 = 1 / (mpmath.power(3, mpmath.mpf(2) / 3) * mpmath.gamma(mpmath.mpf(2) / 3))
        c2 = 1 / (mpmath.power(3, mpmath.mpf(1) / 3) * mpmath.gamma(mpmath.mpf(1) / 3))
        z3 = z ** 3
        eps = mpmath.mpf(10) ** (-_SERIES_DPS)
        # f = sum t_k, g = sum u_k with t_k ~ z^{3k}, u_k ~ z^{3k+1}; z f' = sum 3k t_k
        f, g = mpmath.mpc(1), z
        zf, zg = mpmath.mpc(0), z
        tf, tg = mpmath.mpc(1), z
        k = 0
        while True:
            tf = tf * z3 / ((3 * k + 2) * (3 * k + 3))
            tg = tg * z3 / ((3 * k + 3) * (3 * k + 4))
            k += 1
            f += tf
            g += tg
            zf += 3 * k * tf
            zg += (3 * k + 1) * tg
            scale = max(abs(f), abs(g), abs(zf), abs(zg), mpmath.mpf(1))
            if k > 2 and max(abs(tf), abs(tg)) * (3 * k + 1) < eps * scale:
                break
            if k > 2000:
                raise OracleError("Airy series did not converge")
        if z == 0:
            fp, gp = mpmath.mpc(0), mpmath.mpc(1)
        else:
            fp, gp = zf / z, zg / z
        ai = c1 * f - c2 * g
        aip = c1 * fp - c2 * gp
        return complex(ai), complex(aip)


def _asym_sums(zeta: complex) -> tuple[complex, complex]:
    """Optimally truncated sums ``sum (-1)^k u_k zeta^-k`` and the ``v_k`` analogue."""
    u, v = 1.0, 1.0
    su, sv = 1.0 + 0j, 1.0 + 0j
    inv = 1.0 / zeta
    power = 1.0 + 0j
    last = math.inf
    for k in range(1, 200):
        u = u * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k)
        vk = -(6 * k + 1) / (6 * k - 1) * u
        power = power * (-inv)
        tu, tv = u * power, vk * power
        size = max(abs(tu), abs(tv))
        if size > last:
            break
        su += tu
        sv += tv
        last = size
        if size < 1e-17 * max(abs(su), abs(sv)):
            break
    return su, sv


def _airy_asym_scaled(z: complex) -> tuple[complex, complex, complex]:
    """``(A, B, zeta)`` with ``Ai = e^{-zeta} A`` and ``Ai' = e^{-zeta} B`` for ``|arg z| < pi``."""
    sz = cmath.sqrt(z)
    zeta = 2.0 / 3.0 * z * sz
    q = cmath.sqrt(sz)
    su, sv = _asym_sums(zeta)
    norm = 2.0 * math.sqrt(math.pi)
    return su / (norm * q), -q * sv / norm, zeta


def airy_scaled(z: complex) -> tuple[complex, complex, float]:
    """``(ai, aip, s)`` with ``Ai(z) = ai e^s`` and ``Ai'(z) = aip e^s``; never overflows."""
    z = complex(z)
    if abs(z) <= AIRY_SWITCH_RADIUS:
        ai, aip = _airy_series(z)
        return ai, aip, 0.0
    if abs(cmath.phase(z)) <= 2 * math.pi / 3:
        A, B, zeta = _airy_asym_scaled(z)
        return A * cmath.exp(-1j * zeta.imag), B * cmath.exp(-1j * zeta.imag), -zeta.real
    # connection formula: Ai(z) = -w Ai(wz) - w^2 Ai(w^2 z), Ai'(z) = -w^2 Ai'(wz) - w Ai'(w^2 z)
    parts = []
    for wa, wb, rot in ((-_OMEGA, -_OMEGA ** 2, _OMEGA), (-_OMEGA ** 2, -_OMEGA, _OMEGA ** 2)):
        A, B, zeta = _airy_asym_scaled(rot * z)
        parts.append((wa * A, wb * B, zeta))
    top = max(-p[2].real for p in parts)
    ai = sum(p[0] * cmath.exp(-p[2] - top) for p in parts)
    aip = sum(p[1] * cmath.exp(-p[2] - top) for p in parts)
    return ai, aip, top


def airy(z: complex) -> tuple[complex, complex]:
    """``(Ai(z), Ai'(z))`` for complex ``z``; may under/overflow far from the origin."""
    ai, aip, s = airy_scaled(z)
    f = math.exp(s) if s < 700 else math.inf
    return ai * f, aip * f


def airy_log_derivative(z: complex) -> complex:
    ai, aip, _ = airy_scaled(z)
    if ai == 0:
        raise OracleError("Ai vanishes at the requested point")
    return aip / ai


def _decaying_kappa(x0: complex, c: float, h: float) -> complex:
    """Rotation of ``(hc)^{-2/3}`` for which ``Ai(kappa (x0 + c t))`` decays as ``t`` grows."""
    base = (h * abs(c)) ** (-2.0 / 3.0)
    t_far = 1e3 * (1.0 + abs(x0)) / abs(c)
    best, best_val = None, -math.inf
    for j in range(3):
        kappa = base * _OMEGA ** j
        s = kappa * (x0 + c * t_far)
        if abs(cmath.phase(s)) >= math.pi - 1e-12:
            continue
        val = (2.0 / 3.0 * s * cmath.sqrt(s)).real
        if val > best_val + 1e-9:
            best, best_val = kappa, val
    if best is None or best_val <= 0:
        raise OracleError("no decaying Airy branch for these parameters")
    return best


def airy_dn(eta1: float, mu: float, c: float, h: float) -> complex:
    """DN value ``-ih w'(0)/w(0)`` for the model ``m = c t`` on the half line.

    ``w(t) = Ai(kappa (eta1 - i mu + c t))`` with ``kappa^3 (hc)^2 = 1``; the cube
    root of unity in ``kappa`` is fixed by requiring decay as ``t -> +inf``.
    """
    if mu == 0:
        raise ValueError("mu must be nonzero")
    if c == 0:
        raise ValueError("c must be nonzero; use rho_value for m = 0")
    if h <= 0:
        raise ValueError("h must be positive")
    x0 = complex(eta1, -mu)
    kappa = _decaying_kappa(x0, c, h)
    return -1j * h * kappa * c * airy_log_derivative(kappa * x0)


def airy_dn_array(eta1, mu: float, c: float, h: float) -> np.ndarray:
    eta1 = np.asarray(eta1, dtype=float)
    out = np.empty(eta1.shape, dtype=complex)
    for idx, e in np.ndenumerate(eta1):
        out[idx] = airy_dn(float(e), mu, c, h)
    return out


# -- per-mode ODE ------------------------------------------------------------

@dataclass
class ModeODEProblem:
    """One Fourier mode of the model problem; ``m_profile`` maps ``t`` arrays to complex arrays."""

    eta1: float
    mu: float
    h: float
    m_profile: Callable[[np.ndarray], np.ndarray] | None = None
    T: float = 1.0
    n_points: int | None = None
    r_fine: float = 0.01
    r_coarse: float = 1.0
    max_points: int = 2_000_000

    def __post_init__(self):
        if self.mu == 0:
            raise ValueError("mu must be nonzero")
        if self.h <= 0 or self.T <= 0:
            raise ValueError("h and T must be positive")

    def q(self, t: np.ndarray) -> np.ndarray:
        out = np.full(np.shape(t), complex(self.eta1, -self.mu))
        if self.m_profile is not None:
            out = out + np.asarray(self.m_profile(t), dtype=complex)
        return out


@dataclass
class ModeODESolution:
    t: np.ndarray
    u: np.ndarray
    dn_value: complex
    n_points: int
    beta: float
    ell: float


class _StretchedMap:
    """``t = ell (e^{beta x} - 1)`` on ``x in [0, 1]`` with ``t(1) = T``."""

    def __init__(self, ell: float, T: float):
        self.ell = ell
        self.T = T
        self.beta = math.log1p(T / ell)

    def t(self, x):
        return self.ell * np.expm1(self.beta * x)

    def dt(self, x):
        return self.ell * self.beta * np.exp(self.beta * x)


def _decay_length(p: ModeODEProblem, target: float = 40.0) -> float:
    """Smallest ``t`` where the WKB amplitude ``exp(-int Re sqrt(q)/h)`` drops below ``e^-target``."""
    t = np.concatenate([np.linspace(0, min(p.T, 50 * p.h), 2001), np.linspace(min(p.T, 50 * p.h), p.T, 4001)[1:]])
    rate = np.sqrt(p.q(t)).real / p.h
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))])
    idx = np.searchsorted(cum, target)
    return p.T if idx >= len(t) else float(t[idx])


def _numerov_coefficient(p: ModeODEProblem, mp: _StretchedMap, x: np.ndarray) -> np.ndarray:
    g1 = mp.dt(x)
    return g1 ** 2 * p.q(mp.t(x)) / p.h ** 2 + mp.beta ** 2 / 4.0


def _choose_points(p: ModeODEProblem, mp: _StretchedMap, t_dec: float) -> int:
    x = np.linspace(0.0, 1.0, 8001)
    root = np.sqrt(np.abs(_numerov_coefficient(p, mp, x)))
    fine = mp.t(x) <= t_dec
    need = max(root[fine].max() / p.r_fine, root.max() / p.r_coarse, 10 * mp.beta * mp.ell / p.h, 400)
    return int(math.ceil(need))


_D1_WEIGHTS = np.array([-137 / 60, 5.0, -5.0, 10 / 3, -5 / 4, 1 / 5])


def solve_mode_ode(p: ModeODEProblem, boundary_value: complex = 1.0) -> ModeODESolution:
    """Numerov solve after a Liouville transform on a stretched grid.

    With ``t = g(x)`` and ``u = sqrt(g') v`` the equation becomes
    ``v'' = (g'^2 q / h^2 + beta^2/4) v``, which Numerov integrates at fourth
    order.  ``u'(0)`` is recovered from a one-sided stencil in ``x``.
    """
    t_dec = _decay_length(p)
    ell = min(max(t_dec, p.h), p.T)
    mp = _StretchedMap(ell, p.T)
    N = p.n_points if p.n_points is not None else _choose_points(p, mp, t_dec)
    if N > p.max_points:
        raise UnderResolvedError(f"mode needs {N} points (limit {p.max_points})")
    x = np.linspace(0.0, 1.0, N + 1)
    dx = 1.0 / N
    F = _numerov_coefficient(p, mp, x)
    relevant = mp.t(x) <= t_dec
    if np.max(np.sqrt(np.abs(F[relevant]))) * dx > 0.5:
        raise UnderResolvedError("grid step too large for the oscillation scale near t = 0")
    if mp.dt(0.0) * dx > p.h:
        raise UnderResolvedError("first t-step exceeds h")
    w = 1.0 - dx * dx * F / 12.0
    center = -2.0 * (1.0 + 5.0 * dx * dx * F / 12.0)
    g0 = mp.dt(0.0)
    s0 = math.sqrt(g0)
    v0 = boundary_value / s0
    n_in = N - 1
    ab = np.zeros((3, n_in), dtype=complex)
    ab[0, 1:] = w[2:N]
    ab[1, :] = center[1:N]
    ab[2, :-1] = w[1:N - 1]
    rhs = np.zeros(n_in, dtype=complex)
    rhs[0] = -w[0] * v0
    try:
        inner = solve_banded((1, 1), ab, rhs)
    except (LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from None
    if not np.all(np.isfinite(inner)):
        raise SingularSystemError("non-finite solution of the banded system")
    v = np.concatenate([[v0], inner, [0.0]])
    vp0 = float(0) + np.dot(_D1_WEIGHTS, v[:6]) / dx
    sp0 = 0.5 * mp.beta * s0
    up0 = (sp0 * v0 + s0 * vp0) / g0
    u = np.sqrt(mp.dt(x)) * v
    return ModeODESolution(mp.t(x), u, complex(-1j * p.h * up0), N, mp.beta, ell)


def mode_dn(eta1: float, mu: float, h: float, m_profile=None, T: float = 1.0, **kw) -> complex:
    return solve_mode_ode(ModeODEProblem(eta1, mu, h, m_profile, T, **kw)).dn_value


# -- y-dependent problem in two dimensions ----------------------------------

def _circulant_from_samples(values: np.ndarray) -> np.ndarray:
    """Fourier-space matrix of multiplication by ``values`` (sampled on the nodes)."""
    n = values.shape[0]
    c = np.fft.fft(values) / n
    k = np.arange(n)
    return c[(k[:, None] - k[None, :]) % n]


def bvp_dn_matrix(m_func: Callable[[float, np.ndarray], np.ndarray] | None, grid, mu: float, T: float = 1.0,
                  n_points: int | None = None, r_fine: float = 0.01) -> np.ndarray:
    """DN operator of the ``y``-dependent problem in the (fft-ordered) Fourier basis.

    ``m_func(t, y)`` returns ``m`` on the nodes; ``t`` is scalar.
    """
    if grid.dims != 1:
        raise ValueError("the block solver handles d = 2 only")
    if mu == 0:
        raise ValueError("mu must be nonzero")
    n = grid.n_modes
    if n > 128:
        raise ValueError("block solver is limited to at most 128 modes")
    h = grid.h
    y = grid.nodes[0]
    eta = grid.eta[0]
    diag_q = eta - 1j * mu

    # size the grid from the worst mode of the frozen diagonal
    def mbound(t):
        if m_func is None:
            return np.zeros_like(t)
        return np.array([np.max(np.abs(m_func(tt, y))) for tt in np.atleast_1d(t)])

    probe = [ModeODEProblem(float(e), mu, h, lambda t: mbound(t), T, r_fine=r_fine) for e in (eta.min(), eta.max(), 0.0)]
    t_dec = max(_decay_length(p) for p in probe)
    ell = min(max(t_dec, h), T)
    mp = _StretchedMap(ell, T)
    if n_points is None:
        N = max(_choose_points(p, mp, t_dec) for p in probe)
    else:
        N = n_points
    x = np.linspace(0.0, 1.0, N + 1)
    dx = 1.0 / N
    ts = mp.t(x)
    g1 = mp.dt(x)
    eye = np.eye(n, dtype=complex)

    def Fmat(i):
        Q = np.diag(diag_q)
        if m_func is not None:
            Q = Q + _circulant_from_samples(np.asarray(m_func(float(ts[i]), y), dtype=complex))
        return g1[i] ** 2 * Q / h ** 2 + (mp.beta ** 2 / 4.0) * eye

    def A(i):
        return eye - dx * dx * Fmat(i) / 12.0

    def B(i):
        return -2.0 * (eye + 5.0 * dx * dx * Fmat(i) / 12.0)

    # backward sweep: v_{i} = S_{i-1} v_{i-1}, S_{N-1} = 0
    keep = 6
    S = np.zeros((n, n), dtype=complex)
    stored: dict[int, np.ndarray] = {N - 1: S}
    A_next = A(N)
    A_cur = A(N - 1)
    for i in range(N - 1, 0, -1):
        A_prev = A(i - 1)
        lhs = A_next @ S + B(i)
        try:
            S = -np.linalg.solve(lhs, A_prev)
        except LinAlgError as exc:
            raise SingularSystemError(str(exc)) from None
        if i - 1 < keep:
            stored[i - 1] = S
        A_next, A_cur = A_cur, A_prev
    g0 = g1[0]
    s0 = math.sqrt(g0)
    V = [eye / s0]
    for i in range(5):
        V.append(stored[i] @ V[-1])
    Vp0 = sum(wt * Vi for wt, Vi in zip(_D1_WEIGHTS, V)) / dx
    Up0 = (0.5 * mp.beta * s0 * V[0] + s0 * Vp0) / g0
    return -1j * h * Up0


def solve_bvp_2d(model, f: np.ndarray, grid, mu: float, T: float = 1.0, n_points: int | None = None) -> np.ndarray:
    """Apply the DN map of the ``y``-dependent model to nodal data ``f`` (d = 2)."""
    m_func = model_m_function(model, grid.h) if model is not None and not callable(model) else model
    D = bvp_dn_matrix(m_func, grid, mu, T, n_points)
    return np.fft.ifft(D @ np.fft.fft(f))


def model_m_function(model, h: float):
    """``m(t, y) = sum h^j t^k m_{k,j}(y)`` for an ``eta``-independent two-dimensional model."""
    if model.d != 2:
        raise ValueError("only d = 2 models are supported here")
    if not model.is_eta_independent():
        raise ValueError("the block solver needs m independent of eta")
    if not model.m_table:
        return None
    terms = [(k, j, NumericExpr(e)) for (k, j), e in model.m_table.items()]
    mu = float(model.mu)

    def m(t, y):
        out = np.zeros_like(y, dtype=complex)
        for k, j, f in terms:
            out = out + (h ** j) * (t ** k) * f(1.0 + 0j, mu, [y], [])
        return out

    return m


# -- operator norms -----------------------------------------------------------

@dataclass
class NormEstimate:
    value: float
    iterations: int
    converged: bool


def op_norm_estimate(apply, n: int | None = None, iters: int = 50, seed: int = 0,
                     adjoint=None, tol: float = 1e-10, return_info: bool = False):
    """Power iteration on ``A^H A``; ``apply`` may be a matrix, a LinearOperator or a callable.

    A callable needs ``n`` and ``adjoint``.  Warns if the relative change of the
    estimate is still above ``tol`` after ``iters`` steps.
    """
    if callable(apply) and not isinstance(apply, (np.ndarray, LinearOperator)):
        if n is None or adjoint is None:
            raise ValueError("callable operators need n and adjoint")
        op = LinearOperator((n, n), matvec=apply, rmatvec=adjoint, dtype=complex)
    else:
        op = aslinearoperator(apply)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.shape[1]) + 1j * rng.standard_normal(op.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    converged = False
    it = 0
    for it in range(1, iters + 1):
        y = op.matvec(x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            est, converged = 0.0, True
            break
        z = op.rmatvec(y)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            est, converged = new, True
            break
        x = z / nz
        if est > 0 and abs(new - est) <= tol * new:
            est, converged = new, True
            break
        est = new
    if not converged:
        warnings.warn(f"power iteration not converged after {iters} steps", RuntimeWarning, stacklevel=2)
    if return_info:
        return NormEstimate(est, it, converged)
    return est


def diagonal_norm(values: np.ndarray) -> float:
    """Exact norm of a Fourier multiplier; used to cross-check power iteration."""
    return float(np.max(np.abs(values))) if np.size(values) else 0.0


__all__ = [
    "OracleError", "UnderResolvedError", "SingularSystemError", "airy", "airy_scaled", "airy_log_derivative",
    "airy_dn", "airy_dn_array", "ModeODEProblem", "ModeODESolution", "solve_mode_ode", "mode_dn",
    "bvp_dn_matrix", "solve_bvp_2d", "model_m_function", "op_norm_estimate", "NormEstimate", "diagonal_norm",
    "AIRY_SWITCH_RADIUS", "rho_value",
]
