"""Periodic semiclassical quantization and the numeric parametrix.

Left quantization on a torus of period ``L`` per axis:

    (Op f)(y) = sum_k e^{i <y, k'>} a(y, h k') f_hat(k),   k' = 2 pi k / L.

Everything symbolic (phase, amplitudes, model) is evaluated through
``NumericExpr`` at ``rho = rho_value(eta1, mu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .eikonal import PhaseJet
from .symring import NumericExpr, rho_value
from .transport import AmplitudeJet


class AliasingError(ValueError):
    pass


# -- bump and cutoffs ------------------------------------------------------

def _g(x: np.ndarray, order: int = 0) -> np.ndarray:
    """``exp(-1/x)`` for ``x > 0`` (else 0) and its first two derivatives."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    e = np.exp(-1.0 / xp)
    if order == 0:
        out[pos] = e
    elif order == 1:
        out[pos] = e / xp ** 2
    else:
        out[pos] = e * (1.0 - 2.0 * xp) / xp ** 4
    return out


def bump(sigma, order: int = 0) -> np.ndarray:
    """Smooth bump: 1 on ``[-1, 1]``, 0 outside ``[-2, 2]``; ``order`` selects a derivative (0, 1, 2)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    s = np.asarray(sigma, dtype=float)
    a = np.abs(s)
    A, B = _g(2.0 - a), _g(a - 1.0)
    S = A + B
    phi = A / S
    if order == 0:
        return phi
    A1, B1 = -_g(2.0 - a, 1), _g(a - 1.0, 1)
    S1 = A1 + B1
    d1 = (A1 * S - A * S1) / S ** 2
    sign = np.sign(s)
    if order == 1:
        return sign * d1
    A2, B2 = _g(2.0 - a, 2), _g(a - 1.0, 2)
    S2 = A2 + B2
    d2 = (A2 * S - A * S2) / S ** 2 - 2.0 * S1 * (A1 * S - A * S1) / S ** 3
    return d2


@dataclass(frozen=True)
class CutoffSpec:
    eps: float = 0.1
    delta: float = 0.05

    def __post_init__(self):
        if not 0 < self.eps < 2 / 3:
            raise ValueError("eps must lie in (0, 2/3)")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


def cutoff_Phi(t, eta1, h: float, mu: float, spec: CutoffSpec = CutoffSpec(), order: int = 0):
    """``phi(t / h^eps) phi(t / (delta |rho|^2))`` and its ``t``-derivatives up to ``order``.

    Returns a single array for ``order = 0``, else a tuple ``(Phi, Phi_t, ..)``.
    """
    if h <= 0 or mu == 0:
        raise ValueError("need h > 0 and mu != 0")
    t = np.asarray(t, dtype=float)
    a = h ** spec.eps
    b = spec.delta * np.abs(rho_value(eta1, mu)) ** 2
    u0, v0 = bump(t / a), bump(t / b)
    if order == 0:
        return u0 * v0
    u1, v1 = bump(t / a, 1) / a, bump(t / b, 1) / b
    out = [u0 * v0, u1 * v0 + u0 * v1]
    if order >= 2:
        u2, v2 = bump(t / a, 2) / a ** 2, bump(t / b, 2) / b ** 2
        out.append(u2 * v0 + 2 * u1 * v1 + u0 * v2)
    return tuple(out)


# -- grid --------------------------------------------------------------------

@dataclass(frozen=True)
class TorusGrid:
    """``n_modes`` nodes per axis on a torus of period ``period`` in each of ``dims`` directions."""

    dims: int
    n_modes: int
    h: float
    period: float = 2 * math.pi
    eta_cover: float = 4.0
    require_window: bool = True

    def __post_init__(self):
        if self.dims < 1:
            raise ValueError("dims must be positive")
        if self.n_modes < 2 or self.n_modes & (self.n_modes - 1):
            raise ValueError("n_modes must be a power of two")
        if self.h <= 0 or self.period <= 0:
            raise ValueError("h and period must be positive")
        if self.require_window and self.eta_max < self.eta_cover - 1e-12:
            raise ValueError(f"frequency window reaches |eta| = {self.eta_max:.3g} < {self.eta_cover}")

    @classmethod
    def for_window(cls, dims: int, n_modes: int, h: float, eta_cover: float = 4.0) -> TorusGrid:
        """Shrink the period below ``2 pi`` when needed so the frequencies reach ``eta_cover``."""
        period = min(2 * math.pi, math.pi * h * n_modes / eta_cover)
        return cls(dims, n_modes, h, period, eta_cover)

    @property
    def eta_max(self) -> float:
        return self.h * (2 * math.pi / self.period) * (self.n_modes / 2)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_modes,) * self.dims

    @cached_property
    def nodes(self) -> tuple[np.ndarray, ...]:
        y = np.arange(self.n_modes) * (self.period / self.n_modes)
        return tuple(np.meshgrid(*([y] * self.dims), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        k = np.fft.fftfreq(self.n_modes, 1.0 / self.n_modes)
        return tuple(np.meshgrid(*([k] * self.dims), indexing="ij"))

    @cached_property
    def eta(self) -> tuple[np.ndarray, ...]:
        scale = self.h * 2 * math.pi / self.period
        return tuple(scale * k for k in self.wavenumbers)

    def plane_wave(self, k: tuple[int, ...]) -> np.ndarray:
        phase = sum(ki * (2 * math.pi / self.period) * y for ki, y in zip(k, self.nodes))
        return np.exp(1j * phase)

    def norm(self, f: np.ndarray) -> float:
        """Normalised L2 norm (mean square), so plane waves have norm 1."""
        return float(np.sqrt(np.mean(np.abs(f) ** 2)))


def dump_grid_function(path, grid: TorusGrid, values: np.ndarray) -> None:
    """Text header line then row-major complex128 pairs."""
    values = np.ascontiguousarray(values, dtype=np.complex128)
    if values.shape != grid.shape:
        raise ValueError("values do not match the grid shape")
    header = f"dims={grid.dims} n_modes={grid.n_modes} h={grid.h!r} period={grid.period!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(values.tobytes(order="C"))


def load_grid_function(path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    meta = dict(item.split("=") for item in raw[:nl].decode("ascii").split())
    dims, n = int(meta["dims"]), int(meta["n_modes"])
    data = np.frombuffer(raw[nl + 1:], dtype=np.complex128).reshape((n,) * dims)
    parsed = {"dims": dims, "n_modes": n, "h": float(meta["h"]), "period": float(meta["period"])}
    return parsed, data.copy()


# -- quantization ----------------------------------------------------------

def _sample_symbol(symbol, grid: TorusGrid) -> np.ndarray:
    """Symbol values with shape broadcastable to ``(n_points, n_freq)``."""
    if np.isscalar(symbol):
        return np.full((1, 1), complex(symbol))
    if isinstance(symbol, np.ndarray):
        return symbol
    ys = [y.reshape(-1, 1) for y in grid.nodes]
    etas = [e.reshape(1, -1) for e in grid.eta]
    return np.asarray(symbol(ys, etas), dtype=complex)


def op_apply(symbol, f: np.ndarray, grid: TorusGrid, guard: bool = False, guard_tol: float = 1e-12) -> np.ndarray:
    """Apply ``Op_h(symbol)`` to a grid function.

    ``symbol`` is a scalar, a sampled array of shape ``(n_points|1, n_freq|1)``
    or a callable ``symbol(ys, etas)`` receiving column / row arrays.
    With ``guard`` the symbol must vanish on the outermost frequency shell.
    """
    f = np.asarray(f, dtype=complex)
    if f.shape != grid.shape:
        raise ValueError("grid function has the wrong shape")
    S = np.atleast_2d(_sample_symbol(symbol, grid))
    npts = f.size
    if guard and S.shape[1] > 1:
        edge = np.zeros(grid.shape, dtype=bool)
        for k in grid.wavenumbers:
            edge |= np.abs(k) >= grid.n_modes // 2 - 1
        vals = np.abs(np.broadcast_to(S, (S.shape[0], npts))[:, edge.ravel()])
        if vals.size and vals.max() > guard_tol * max(np.abs(S).max(), 1e-300):
            raise AliasingError("symbol does not vanish at the edge of the frequency window")
    fhat = np.fft.fftn(f)
    if S.shape[0] == 1:
        return _multiplier(S, fhat, grid)
    if S.shape[1] == 1:
        return S[:, 0].reshape(grid.shape) * f
    # general: sum over frequencies of e^{i y k'} a(y, hk') fhat(k) / N
    phases = sum(np.outer(y.ravel(), k.ravel() * (2 * math.pi / grid.period))
                 for y, k in zip(grid.nodes, grid.wavenumbers))
    kernel = np.exp(1j * phases) * S
    return (kernel @ fhat.ravel() / npts).reshape(grid.shape)


def _multiplier(S: np.ndarray, fhat: np.ndarray, grid: TorusGrid) -> np.ndarray:
    if S.shape[1] == 1:
        return np.fft.ifftn(S[0, 0] * fhat)
    return np.fft.ifftn(S.reshape(grid.shape) * fhat)


# -- numeric jets --------------------------------------------------------------

@dataclass
class NumericJets:
    """Compiled evaluators for ``phi_k`` and ``a_{k,j}``."""

    phase: PhaseJet
    amps: AmplitudeJet | None = None
    _phi: dict = field(default_factory=dict, repr=False)
    _amp: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._phi = {k + 1: NumericExpr(e) for k, e in enumerate(self.phase.phis) if e}
        if self.amps is not None:
            self._amp = {kj: NumericExpr(e) for kj, e in self.amps.amps.items() if e}

    @property
    def d(self) -> int:
        return self.phase.d

    @staticmethod
    def _args(eta, mu, ys):
        eta = list(eta)
        rho = rho_value(eta[0], mu)
        return rho, list(ys), eta[1:]

    def phi_k(self, k, eta, mu, ys=()):
        if k not in self._phi:
            return 0.0
        rho, ys, tail = self._args(eta, mu, ys or self._zero_ys(eta))
        return self._phi[k](rho, mu, ys, tail)

    def a_kj(self, k, j, eta, mu, ys=()):
        if (k, j) not in self._amp:
            return 0.0
        rho, ys, tail = self._args(eta, mu, ys or self._zero_ys(eta))
        return self._amp[(k, j)](rho, mu, ys, tail)

    def _zero_ys(self, eta):
        return [0.0] * (self.d - 1)

    def phase_t(self, t, eta, mu, ys=(), order: int = 0):
        """``d_t^order sum_k t^k phi_k``; ``t`` broadcasts against the symbol arrays."""
        total = 0.0
        for k in self._phi:
            if k < order:
                continue
            coef = math.factorial(k) // math.factorial(k - order)
            total = total + coef * np.power(t, k - order) * self.phi_k(k, eta, mu, ys)
        return total

    def amplitude_t(self, t, h: float, eta, mu, ys=(), order: int = 0):
        """``d_t^order sum_{k,j} h^j t^k a_{k,j}``."""
        total = 0.0
        for (k, j) in self._amp:
            if k < order:
                continue
            coef = math.factorial(k) // math.factorial(k - order)
            total = total + coef * h ** j * np.power(t, k - order) * self.a_kj(k, j, eta, mu, ys)
        return total


def evaluate_parametrix(phase: PhaseJet, amps: AmplitudeJet, spec: CutoffSpec, f: np.ndarray, t: float,
                        grid: TorusGrid, mu: float, jets: NumericJets | None = None) -> np.ndarray:
    """``u~(t, .)``: ``Op_h`` of ``e^{i phi/h} Phi phi(eta1) sum h^j t^k a_{k,j}`` applied to ``f``."""
    if mu == 0:
        raise ValueError("mu must be nonzero")
    jets = jets if jets is not None else NumericJets(phase, amps)
    h = grid.h
    ys = [y.reshape(-1, 1) for y in grid.nodes]
    etas = [e.reshape(1, -1) for e in grid.eta]
    if t == 0:
        return op_apply(lambda _y, e: bump(e[0]), f, grid)
    ph = jets.phase_t(t, etas, mu, ys)
    A = jets.amplitude_t(t, h, etas, mu, ys)
    Phi = cutoff_Phi(t, etas[0], h, mu, spec)
    window = Phi * bump(etas[0])
    with np.errstate(over="ignore", invalid="ignore"):
        sym = np.where(window != 0, np.exp(1j * ph / h) * window * A, 0.0)
    return op_apply(sym, f, grid)


@dataclass
class DNSymbol:
    s: int
    k: int
    field: np.ndarray
    grid: TorusGrid
    mu: float

    def apply(self, f: np.ndarray) -> np.ndarray:
        return op_apply(self.field, f, self.grid)


def _check_sk(s: int, k: int) -> None:
    if s < 0 or k < 0:
        raise ValueError("s and k must be nonnegative")
    if k > 3 * s + 2:
        raise ValueError(f"k = {k} exceeds 3s+2 = {3 * s + 2}")


def dn_symbol_values(jets: NumericJets, s: int, k: int, eta, mu: float, h: float, ys=()) -> np.ndarray:
    """``phi(eta1) [rho^{k+1} - i sum_{j<s} h^{j+1} rho^k a_{1,j}]`` at arbitrary sample points."""
    _check_sk(s, k)
    eta = list(eta)
    rho = rho_value(eta[0], mu)
    corr = 0.0
    for j in range(s):
        corr = corr + h ** (j + 1) * jets.a_kj(1, j, eta, mu, ys)
    return bump(eta[0]) * (rho ** (k + 1) - 1j * rho ** k * corr)


def dn_symbol(phase: PhaseJet, amps: AmplitudeJet, s: int, k: int, grid: TorusGrid, mu: float,
              jets: NumericJets | None = None) -> DNSymbol:
    _check_sk(s, k)
    if s > amps.M:
        raise ValueError("amplitude jets are not deep enough for this s")
    jets = jets if jets is not None else NumericJets(phase, amps)
    etas = [e.reshape(1, -1) for e in grid.eta]
    if amps.model.is_y_independent():
        field_ = dn_symbol_values(jets, s, k, etas, mu, grid.h)
    else:
        ys = [y.reshape(-1, 1) for y in grid.nodes]
        field_ = dn_symbol_values(jets, s, k, etas, mu, grid.h, ys)
    return DNSymbol(s, k, np.atleast_2d(field_), grid, mu)


def parametrix_dt0_symbol(jets: NumericJets, eta, mu: float, h: float, ys=()) -> np.ndarray:
    """``D_t`` of the parametrix symbol at ``t = 0``, from the jets (all ``j``)."""
    eta = list(eta)
    total = jets.phase_t(0.0, eta, mu, ys, order=1) * jets.amplitude_t(0.0, h, eta, mu, ys)
    total = total - 1j * h * jets.amplitude_t(0.0, h, eta, mu, ys, order=1)
    return bump(eta[0]) * total


def model_residual_mode(jets: NumericJets, m_profile: Callable, t: np.ndarray, eta1: float, mu: float,
                        h: float, spec: CutoffSpec) -> np.ndarray:
    """``e^{-i..}``-free value of ``P_0 u~`` for one frequency (``d = 2``, ``y``-independent model).

    ``P_0 (e^{i phi/h} W) = e^{i phi/h} [(phi'^2 + eta1 - i mu + m) W - ih phi'' W - 2ih phi' W' - h^2 W'']``
    with ``W = Phi phi(eta1) A``; the returned array includes the exponential.
    """
    eta = [np.asarray(eta1, dtype=float)]
    ph = jets.phase_t(t, eta, mu)
    p1 = jets.phase_t(t, eta, mu, order=1)
    p2 = jets.phase_t(t, eta, mu, order=2)
    A0 = jets.amplitude_t(t, h, eta, mu)
    A1 = jets.amplitude_t(t, h, eta, mu, order=1)
    A2 = jets.amplitude_t(t, h, eta, mu, order=2)
    C0, C1, C2 = cutoff_Phi(t, eta1, h, mu, spec, order=2)
    b = bump(eta1)
    W0 = b * C0 * A0
    W1 = b * (C1 * A0 + C0 * A1)
    W2 = b * (C2 * A0 + 2 * C1 * A1 + C0 * A2)
    q = eta1 - 1j * mu + m_profile(t)
    bracket = (p1 ** 2 + q) * W0 - 1j * h * p2 * W0 - 2j * h * p1 * W1 - h ** 2 * W2
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where((W0 != 0) | (W1 != 0) | (W2 != 0), np.exp(1j * ph / h) * bracket, 0.0)
    return out


def model_residual_norm(jets: NumericJets, m_profile: Callable, h: float, mu: float, spec: CutoffSpec,
                        eta1s=None, n_t: int = 8001) -> float:
    """``max_eta1 ||P_0 u~(., eta1)||_{L^2_t}``: the operator norm of ``f -> P_0 u~`` for a ``y``-independent model."""
    eta1s = np.linspace(-2.0, 2.0, 41) if eta1s is None else eta1s
    best = 0.0
    for eta1 in eta1s:
        # both cutoff factors vanish beyond twice their scale
        t_max = min(2 * h ** spec.eps, 2 * spec.delta * abs(rho_value(eta1, mu)) ** 2)
        t = np.linspace(0.0, t_max, n_t)
        r = model_residual_mode(jets, m_profile, t, eta1, mu, h, spec)
        best = max(best, math.sqrt(simpson(np.abs(r) ** 2, x=t)))
    return best


__all__ = [
    "model_residual_norm",
    "AliasingError", "bump", "CutoffSpec", "cutoff_Phi", "TorusGrid", "dump_grid_function",
    "load_grid_function", "op_apply", "NumericJets", "evaluate_parametrix", "DNSymbol", "dn_symbol",
    "dn_symbol_values", "parametrix_dt0_symbol", "model_residual_mode",
]
