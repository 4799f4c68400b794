"""Exact ring for jet coefficients.

Elements are Laurent polynomials in the square-root atom ``rho`` with
polynomial dependence on ``mu``, the tangential positions ``y1..y_{d-1}``
and the tangential duals ``eta2..eta_{d-1}``.  The first dual ``eta1``
never appears: it is eliminated through ``eta1 = i*mu - rho**2``.

Coefficients are Gaussian rationals.  An expression stores its real and
imaginary parts as two FLINT rational multivariate polynomials; negative
powers of ``rho`` are handled by a fixed exponent offset on that variable.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

import flint
import numpy as np

# stored rho exponent = true exponent + _OFF
_OFF = 512


def _fmpq(x: Fraction) -> flint.fmpq:
    return flint.fmpq(x.numerator, x.denominator)


def _frac(q: flint.fmpq) -> Fraction:
    return Fraction(int(q.p), int(q.q))


@dataclass(frozen=True)
class ComplexRational:
    """Exact complex number with rational parts."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", Fraction(self.re))
        object.__setattr__(self, "im", Fraction(self.im))

    @classmethod
    def of(cls, x) -> ComplexRational:
        if isinstance(x, ComplexRational):
            return x
        if isinstance(x, complex):
            if x.real != int(x.real) or x.imag != int(x.imag):
                raise TypeError("only integral complex literals convert exactly")
            return cls(Fraction(int(x.real)), Fraction(int(x.imag)))
        if isinstance(x, float):
            raise TypeError("floating point values are not allowed in the exact ring")
        if isinstance(x, tuple):
            return cls(Fraction(x[0]), Fraction(x[1]))
        return cls(Fraction(x), Fraction(0))

    def pair(self) -> tuple[flint.fmpq, flint.fmpq]:
        return _fmpq(self.re), _fmpq(self.im)

    def __add__(self, other):
        o = ComplexRational.of(other)
        return ComplexRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return ComplexRational(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-ComplexRational.of(other))

    def __rsub__(self, other):
        return ComplexRational.of(other) - self

    def __mul__(self, other):
        o = ComplexRational.of(other)
        return ComplexRational(self.re * o.re - self.im * o.im,
                               self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = ComplexRational.of(other)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero in ComplexRational")
        return ComplexRational((self.re * o.re + self.im * o.im) / den,
                               (self.im * o.re - self.re * o.im) / den)

    def __rtruediv__(self, other):
        return ComplexRational.of(other) / self

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("integer powers only")
        base = self if n >= 0 else ComplexRational(1) / self
        out = ComplexRational(1)
        for _ in range(abs(n)):
            out = out * base
        return out

    def conjugate(self) -> ComplexRational:
        return ComplexRational(self.re, -self.im)

    def __eq__(self, other):
        try:
            o = ComplexRational.of(other)
        except TypeError:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        return f"ComplexRational({self.re}, {self.im})"


I = ComplexRational(0, 1)


@dataclass(frozen=True)
class Monomial:
    """Read-only view of one stored term."""

    rho_exp: int
    mu_exp: int
    y_exps: tuple[int, ...]
    eta_exps: tuple[int, ...]
    coeff: ComplexRational


class Layout:
    """Variable layout for dimension ``d``: ``rho, mu, y1.., eta2..``."""

    __slots__ = ("d", "nvars", "ctx", "gens", "r_off", "zero_poly")
    _cache: dict[int, "Layout"] = {}

    def __new__(cls, d: int):
        if d in cls._cache:
            return cls._cache[d]
        if d < 2:
            raise ValueError("dimension d must be at least 2")
        obj = super().__new__(cls)
        obj.d = d
        names = ["rho", "mu"] + [f"y{i}" for i in range(1, d)] + [f"eta{i}" for i in range(2, d)]
        obj.nvars = len(names)
        obj.ctx = flint.fmpq_mpoly_ctx.get(tuple(names), "lex")
        obj.gens = obj.ctx.gens()
        obj.r_off = obj.gens[0] ** _OFF
        obj.zero_poly = obj.ctx.from_dict({})
        cls._cache[d] = obj
        return obj

    def y_slot(self, i: int) -> int:
        if not 1 <= i <= self.d - 1:
            raise IndexError(f"y axis {i} out of range 1..{self.d - 1}")
        return 1 + i

    def eta_slot(self, i: int) -> int:
        if not 2 <= i <= self.d - 1:
            raise IndexError(f"eta axis {i} out of range 2..{self.d - 1}")
        return self.d + i - 1

    def pack(self, rho: int, mu: int, y: Sequence[int], eta: Sequence[int]) -> tuple[int, ...]:
        if len(y) != self.d - 1 or len(eta) != self.d - 2:
            raise ValueError("exponent vector length does not match dimension")
        if rho + _OFF < 0:
            raise OverflowError("rho exponent below the supported range")
        return (rho + _OFF, mu, *y, *eta)

    def unpack(self, exps: tuple[int, ...]) -> tuple[int, int, tuple[int, ...], tuple[int, ...]]:
        d = self.d
        exps = tuple(int(e) for e in exps)
        return exps[0] - _OFF, exps[1], exps[2:d + 1], exps[d + 1:]


class SymExpr:
    """Immutable exact expression; see module docstring for the variables."""

    __slots__ = ("d", "re", "im")

    def __init__(self, d: int, re=None, im=None):
        lay = Layout(d)
        self.d = d
        self.re = re if re is not None else lay.zero_poly
        self.im = im if im is not None else lay.zero_poly

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, d: int) -> SymExpr:
        return cls(d)

    @classmethod
    def const(cls, d: int, c) -> SymExpr:
        return cls.monomial(d, c)

    @classmethod
    def one(cls, d: int) -> SymExpr:
        return cls.const(d, 1)

    @classmethod
    def monomial(cls, d: int, coeff=1, rho: int = 0, mu: int = 0,
                 y: Sequence[int] | None = None, eta: Sequence[int] | None = None) -> SymExpr:
        lay = Layout(d)
        y = tuple(y) if y is not None else (0,) * (d - 1)
        eta = tuple(eta) if eta is not None else (0,) * (d - 2)
        exps = lay.pack(rho, mu, y, eta)
        c = ComplexRational.of(coeff)
        re = lay.ctx.from_dict({exps: _fmpq(c.re)} if c.re else {})
        im = lay.ctx.from_dict({exps: _fmpq(c.im)} if c.im else {})
        return cls(d, re, im)

    @classmethod
    def rho(cls, d: int, power: int = 1) -> SymExpr:
        return cls.monomial(d, 1, rho=power)

    @classmethod
    def mu(cls, d: int) -> SymExpr:
        return cls.monomial(d, 1, mu=1)

    @classmethod
    def y(cls, d: int, i: int) -> SymExpr:
        exps = [0] * (d - 1)
        Layout(d).y_slot(i)
        exps[i - 1] = 1
        return cls.monomial(d, 1, y=exps)

    @classmethod
    def eta(cls, d: int, i: int) -> SymExpr:
        """Tangential dual ``eta_i``; ``i = 1`` returns its normal form ``i*mu - rho**2``."""
        if i == 1:
            return cls.monomial(d, I, mu=1) - cls.rho(d, 2)
        exps = [0] * (d - 2)
        Layout(d).eta_slot(i)
        exps[i - 2] = 1
        return cls.monomial(d, 1, eta=exps)

    # -- basic protocol -------------------------------------------------
    @property
    def layout(self) -> Layout:
        return Layout(self.d)

    def is_zero(self) -> bool:
        return self.re.is_zero() and self.im.is_zero()

    def __bool__(self):
        return not self.is_zero()

    def __len__(self):
        return len(self._keys())

    def size(self) -> int:
        """Cheap size proxy: stored terms over both parts."""
        return len(self.re) + len(self.im)

    def _keys(self) -> set:
        return set(self.re.monoms()) | set(self.im.monoms())

    def __eq__(self, other):
        if isinstance(other, SymExpr):
            return self.d == other.d and self.re == other.re and self.im == other.im
        try:
            return self == SymExpr.const(self.d, other)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash((self.d, str(self.re), str(self.im)))

    def _coerce(self, other) -> SymExpr:
        if isinstance(other, SymExpr):
            if other.d != self.d:
                raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")
            return other
        return SymExpr.const(self.d, other)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, JetSeries):
            return NotImplemented
        o = self._coerce(other)
        return SymExpr(self.d, self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, JetSeries):
            return NotImplemented
        o = self._coerce(other)
        return SymExpr(self.d, self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return SymExpr(self.d, -self.re, -self.im)

    def scale(self, c) -> SymExpr:
        c = ComplexRational.of(c)
        cr, ci = _fmpq(c.re), _fmpq(c.im)
        if not c.im:
            return SymExpr(self.d, self.re * cr, self.im * cr)
        if not c.re:
            return SymExpr(self.d, -(self.im * ci), self.re * ci)
        return SymExpr(self.d, self.re * cr - self.im * ci, self.im * cr + self.re * ci)

    def __mul__(self, other):
        if isinstance(other, JetSeries):
            return NotImplemented
        if not isinstance(other, SymExpr):
            return self.scale(other)
        o = self._coerce(other)
        re, im = _complex_product(self, o)
        off = self.layout.r_off
        return SymExpr(self.d, re / off, im / off)

    def __rmul__(self, other):
        return self.scale(other)

    def __truediv__(self, other):
        if isinstance(other, SymExpr):
            return self * other.inverse()
        c = ComplexRational.of(other)
        if not c:
            raise ZeroDivisionError("division of SymExpr by zero")
        return self.scale(ComplexRational(1) / c)

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("integer powers only")
        if n < 0:
            return self.inverse() ** (-n)
        out = SymExpr.one(self.d)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def inverse(self) -> SymExpr:
        """Inverse of a single term carrying only a ``rho`` power."""
        keys = self._keys()
        if len(keys) != 1:
            raise ZeroDivisionError("only single rho-monomials are invertible in the Laurent ring")
        (key,) = keys
        rho_e, mu_e, y_e, eta_e = self.layout.unpack(key)
        if mu_e or any(y_e) or any(eta_e):
            raise ZeroDivisionError("only powers of rho are invertible")
        c = ComplexRational(1) / self.coeff_of(key)
        return SymExpr.monomial(self.d, c, rho=-rho_e)

    def mul_rho(self, n: int) -> SymExpr:
        """Multiply by ``rho**n``."""
        if n == 0:
            return self
        g = self.layout.gens[0]
        if n > 0:
            f = g ** n
            return SymExpr(self.d, self.re * f, self.im * f)
        f = g ** (-n)
        try:
            return SymExpr(self.d, self.re / f, self.im / f)
        except flint.DomainError:
            raise OverflowError("rho exponent below the supported range") from None

    # -- differentiation ---------------------------------------------------
    def _diff_var(self, var: int) -> SymExpr:
        return SymExpr(self.d, self.re.derivative(var), self.im.derivative(var))

    def diff_y(self, i: int) -> SymExpr:
        return self._diff_var(self.layout.y_slot(i))

    def diff_eta(self, i: int) -> SymExpr:
        if i == 1:
            # d/d eta1 = -(1/(2 rho)) d/d rho, so rho^e -> -(e/2) rho^(e-2)
            lay = self.layout
            r = lay.gens[0]
            r2 = r * r
            half = flint.fmpq(-1, 2)

            def one(p):
                if p.is_zero():
                    return p
                return ((r * p.derivative(0) - p * _OFF) * half) / r2

            return SymExpr(self.d, one(self.re), one(self.im))
        return self._diff_var(self.layout.eta_slot(i))

    def diff_mu(self) -> SymExpr:
        """Derivative in the ``mu`` slot with ``rho`` held fixed."""
        return self._diff_var(1)

    def subs_mu(self, value) -> SymExpr:
        """Replace the ``mu`` indeterminate by a rational number."""
        q = _fmpq(Fraction(value))
        return SymExpr(self.d, self.re.subs({"mu": q}), self.im.subs({"mu": q}))

    def diff_multi_y(self, alpha: Sequence[int]) -> SymExpr:
        out = self
        for i, n in enumerate(alpha, start=1):
            for _ in range(n):
                out = out.diff_y(i)
        return out

    def diff_multi_eta(self, alpha: Sequence[int]) -> SymExpr:
        out = self
        for i, n in enumerate(alpha, start=1):
            for _ in range(n):
                out = out.diff_eta(i)
        return out

    # -- inspection --------------------------------------------------------
    def rho_exponents(self) -> set[int]:
        return {k[0] - _OFF for k in self._keys()}

    def rho_degree(self) -> float:
        """Largest ``rho`` exponent; ``-inf`` for zero."""
        if self.is_zero():
            return -math.inf
        degs = [p.degrees()[0] for p in (self.re, self.im) if not p.is_zero()]
        return max(degs) - _OFF

    def rho_valuation(self) -> float:
        """Smallest ``rho`` exponent; ``+inf`` for zero.

        With ``|rho|`` bounded above, ``a`` lies in S^k(|rho|) exactly when
        ``rho_valuation(a) >= k``.
        """
        exps = self.rho_exponents()
        return min(exps) if exps else math.inf

    def coeff_of(self, key: tuple[int, ...]) -> ComplexRational:
        return ComplexRational(_frac(self.re[key]), _frac(self.im[key]))

    def items(self) -> dict[tuple[int, ...], ComplexRational]:
        """All terms as ``{stored exponent tuple: coefficient}``."""
        out: dict[tuple[int, ...], list] = {}
        for k, v in self.re.to_dict().items():
            out.setdefault(k, [0, 0])[0] = _frac(v)
        for k, v in self.im.to_dict().items():
            out.setdefault(k, [0, 0])[1] = _frac(v)
        return {k: ComplexRational(a, b) for k, (a, b) in out.items()}

    def terms(self) -> Iterator[Monomial]:
        lay = self.layout
        items = self.items()
        for key in sorted(items, key=_sort_key):
            rho, mu, y, eta = lay.unpack(key)
            yield Monomial(rho, mu, y, eta, items[key])

    def is_polynomial_in_eta1(self) -> bool:
        """True when every ``rho`` exponent is even and non-negative."""
        return all(e >= 0 and e % 2 == 0 for e in self.rho_exponents())

    def max_degree(self, slot_name: str) -> int:
        """Largest exponent of ``mu``, ``y<i>`` or ``eta<i>`` (``eta1`` via rho/2)."""
        lay = self.layout
        best = 0
        for key in self._keys():
            rho, mu, y, eta = lay.unpack(key)
            if slot_name == "mu":
                best = max(best, mu)
            elif slot_name.startswith("y"):
                best = max(best, y[int(slot_name[1:]) - 1])
            elif slot_name == "eta1":
                best = max(best, max(rho, 0) // 2)
            elif slot_name.startswith("eta"):
                best = max(best, eta[int(slot_name[3:]) - 2])
        return best

    # -- numerics ----------------------------------------------------------
    def eval_numeric(self, y: Sequence[float] = (), eta1: float = 0.0,
                     eta_tail: Sequence[float] = (), mu: float = 1.0) -> complex:
        ys = list(y) + [0.0] * (self.d - 1 - len(y))
        et = list(eta_tail) + [0.0] * (self.d - 2 - len(eta_tail))
        val = NumericExpr(self)(rho_value(eta1, mu), mu, ys, et)
        return complex(val)

    # -- text ------------------------------------------------------------------
    def to_text(self) -> str:
        return format_expr(self)

    def __repr__(self):
        return f"SymExpr(d={self.d}, {format_expr(self)!r})"

    def __str__(self):
        return format_expr(self)


def _complex_product(a: SymExpr, b: SymExpr):
    """Real and imaginary parts of ``a*b`` before removing the doubled offset."""
    zero = a.layout.zero_poly
    ar, ai, br, bi = a.re, a.im, b.re, b.im
    re = zero
    im = zero
    if not ar.is_zero() and not br.is_zero():
        re = ar * br
    if not ai.is_zero() and not bi.is_zero():
        re = re - ai * bi
    if not ar.is_zero() and not bi.is_zero():
        im = ar * bi
    if not ai.is_zero() and not br.is_zero():
        im = im + ai * br
    return re, im


class SymAccumulator:
    """Running sum of terms and products, kept at doubled offset until the end."""

    __slots__ = ("d", "re", "im")

    def __init__(self, d: int):
        lay = Layout(d)
        self.d = d
        self.re = lay.zero_poly
        self.im = lay.zero_poly

    def add(self, expr: SymExpr, coeff=1) -> SymAccumulator:
        e = expr.scale(coeff) if coeff != 1 else expr
        off = expr.layout.r_off
        self.re = self.re + e.re * off
        self.im = self.im + e.im * off
        return self

    def add_product(self, a: SymExpr, b: SymExpr, coeff=1) -> SymAccumulator:
        """Add ``coeff * a * b``; the scalar is applied to the shorter factor."""
        if a.size() > b.size():
            a, b = b, a
        if coeff != 1:
            a = a.scale(coeff)
        re, im = _complex_product(a, b)
        self.re = self.re + re
        self.im = self.im + im
        return self

    def result(self) -> SymExpr:
        off = Layout(self.d).r_off
        return SymExpr(self.d, self.re / off, self.im / off)


def _sort_key(exps: tuple[int, ...]):
    return (-exps[0], exps[1], tuple(-e for e in exps[2:]))


def rho_value(eta1, mu):
    """``sqrt(-eta1 + i mu)`` on the branch with positive imaginary part."""
    mu_arr = np.asarray(mu)
    if np.any(mu_arr == 0):
        raise ValueError("mu = 0 is excluded: the rho branch degenerates")
    r = np.sqrt(-np.asarray(eta1, dtype=complex) + 1j * mu_arr)
    return np.where(r.imag < 0, -r, r)


class NumericExpr:
    """Floating-point evaluator compiled from a ``SymExpr``.

    Call with broadcastable arrays ``rho``, ``mu``, ``ys`` (length d-1) and
    ``eta_tail`` (length d-2).
    """

    def __init__(self, expr: SymExpr):
        self.d = expr.d
        lay = expr.layout
        groups: dict[tuple, list] = {}
        for key, c in expr.items().items():
            rho, mu, y, eta = lay.unpack(key)
            groups.setdefault((y, eta), []).append((rho, mu, complex(c)))
        self.groups = groups

    def __call__(self, rho, mu, ys: Sequence = (), eta_tail: Sequence = ()):
        rho = np.asarray(rho, dtype=complex)
        mu = np.asarray(mu, dtype=float)
        rho_pow: dict[int, np.ndarray] = {}
        mu_pow: dict[int, np.ndarray] = {}
        var_pow: dict[tuple[int, int], np.ndarray] = {}
        tail = list(ys) + list(eta_tail)

        def rp(e):
            if e not in rho_pow:
                rho_pow[e] = rho ** e
            return rho_pow[e]

        def mp(e):
            if e not in mu_pow:
                mu_pow[e] = mu ** e
            return mu_pow[e]

        def vp(slot, e):
            if (slot, e) not in var_pow:
                var_pow[(slot, e)] = np.asarray(tail[slot], dtype=float) ** e
            return var_pow[(slot, e)]

        total = np.zeros((), dtype=complex)
        for (y, eta), items in self.groups.items():
            part = np.zeros((), dtype=complex)
            for rho_e, mu_e, c in items:
                term = c * rp(rho_e)
                if mu_e:
                    term = term * mp(mu_e)
                part = part + term
            for slot, e in enumerate(y + eta):
                if e:
                    part = part * vp(slot, e)
            total = total + part
        return total


# -- text format ------------------------------------------------------------

def _fmt_frac(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _fmt_coeff(c: ComplexRational) -> str:
    if c.im == 0:
        return _fmt_frac(c.re)
    if c.re == 0:
        if abs(c.im) == 1:
            return "I" if c.im > 0 else "-I"
        return f"{_fmt_frac(c.im)}*I"
    return f"({_fmt_frac(c.re)} + {_fmt_frac(c.im)}*I)"


def format_expr(expr: SymExpr) -> str:
    """Canonical text form: one term per monomial, deterministic order."""
    parts = []
    for mono in expr.terms():
        factors = [_fmt_coeff(mono.coeff)]
        if mono.rho_exp:
            e = mono.rho_exp
            factors.append("rho" if e == 1 else f"rho**{e}" if e > 0 else f"rho**({e})")
        named = [("mu", mono.mu_exp)]
        named += [(f"y{i}", e) for i, e in enumerate(mono.y_exps, start=1)]
        named += [(f"eta{i}", e) for i, e in enumerate(mono.eta_exps, start=2)]
        factors += [name if e == 1 else f"{name}**{e}" for name, e in named if e]
        if len(factors) > 1 and factors[0] in ("1", "-1"):
            sign = factors.pop(0)
            factors[0] = ("-" if sign == "-1" else "") + factors[0]
        parts.append("*".join(factors))
    return " + ".join(parts) if parts else "0"


class ParseError(ValueError):
    pass


def parse_expr(text: str, d: int) -> SymExpr:
    """Parse the restricted grammar produced by :func:`format_expr`.

    Names: ``rho``, ``mu``, ``I``, ``y1..y_{d-1}``, ``eta2..eta_{d-1}``.
    ``eta1`` is rejected; write it as ``(I*mu - rho**2)``.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse {text!r}: {exc.msg}") from None
    return _Eval(d).visit(tree.body)


class _Eval(ast.NodeVisitor):
    def __init__(self, d: int):
        self.d = d
        Layout(d)

    def generic_visit(self, node):
        raise ParseError(f"unsupported syntax: {ast.dump(node)}")

    def visit_Constant(self, node):
        if isinstance(node.value, bool) or not isinstance(node.value, int):
            raise ParseError(f"only integer literals are allowed, got {node.value!r}")
        return SymExpr.const(self.d, node.value)

    def visit_Name(self, node):
        name, d = node.id, self.d
        if name == "rho":
            return SymExpr.rho(d)
        if name == "mu":
            return SymExpr.mu(d)
        if name == "I":
            return SymExpr.const(d, I)
        if name == "eta1":
            raise ParseError("eta1 is not an input variable; write (I*mu - rho**2)")
        try:
            if name.startswith("y") and name[1:].isdigit():
                return SymExpr.y(d, int(name[1:]))
            if name.startswith("eta") and name[3:].isdigit():
                return SymExpr.eta(d, int(name[3:]))
        except IndexError as exc:
            raise ParseError(str(exc)) from None
        raise ParseError(f"unknown name {name!r}")

    def visit_UnaryOp(self, node):
        val = self.visit(node.operand)
        if isinstance(node.op, ast.USub):
            return -val
        if isinstance(node.op, ast.UAdd):
            return val
        raise ParseError("unsupported unary operator")

    def visit_BinOp(self, node):
        left = self.visit(node.left)
        if isinstance(node.op, ast.Pow):
            n = self._int_exponent(node.right)
            try:
                return left ** n
            except ZeroDivisionError as exc:
                raise ParseError(str(exc)) from None
        right = self.visit(node.right)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            try:
                return left / right
            except ZeroDivisionError as exc:
                raise ParseError(str(exc)) from None
        raise ParseError("unsupported binary operator")

    def _int_exponent(self, node) -> int:
        sign = 1
        while isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            if isinstance(node.op, ast.USub):
                sign = -sign
            node = node.operand
        if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
            return sign * node.value
        raise ParseError("exponents must be integer literals")


# -- jets ---------------------------------------------------------------------

def _min_trunc(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


class JetSeries:
    """Truncated double series in ``t`` and ``h`` with ``SymExpr`` coefficients.

    ``t_trunc``/``h_trunc`` of ``None`` mean the series is an exact polynomial
    in that variable; otherwise coefficients of order ``>= trunc`` are unknown
    and never stored.
    """

    __slots__ = ("d", "coeffs", "t_trunc", "h_trunc")

    def __init__(self, d: int, coeffs: Mapping[tuple[int, int], SymExpr] | None = None,
                 t_trunc: int | None = None, h_trunc: int | None = None):
        self.d = d
        self.t_trunc = t_trunc
        self.h_trunc = h_trunc
        out = {}
        for (k, j), c in (coeffs or {}).items():
            if k < 0 or j < 0:
                raise ValueError("negative orders are not allowed")
            if (t_trunc is not None and k >= t_trunc) or (h_trunc is not None and j >= h_trunc):
                continue
            if c.d != d:
                raise ValueError("dimension mismatch in JetSeries coefficient")
            if not c.is_zero():
                out[(k, j)] = c
        self.coeffs = out

    @classmethod
    def from_t_list(cls, d: int, items: Sequence[SymExpr], h_order: int = 0,
                    t_trunc: int | None = None, h_trunc: int | None = None) -> JetSeries:
        return cls(d, {(k, h_order): c for k, c in enumerate(items)}, t_trunc, h_trunc)

    @classmethod
    def scalar(cls, expr: SymExpr, t_trunc=None, h_trunc=None) -> JetSeries:
        return cls(expr.d, {(0, 0): expr}, t_trunc, h_trunc)

    def coeff(self, k: int, j: int = 0) -> SymExpr:
        if (self.t_trunc is not None and k >= self.t_trunc) or (self.h_trunc is not None and j >= self.h_trunc):
            raise KeyError(f"order ({k}, {j}) lies beyond the truncation")
        return self.coeffs.get((k, j)) or SymExpr.zero(self.d)

    def orders(self) -> list[tuple[int, int]]:
        return sorted(self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def truncate(self, t_trunc=None, h_trunc=None) -> JetSeries:
        return JetSeries(self.d, self.coeffs, _min_trunc(self.t_trunc, t_trunc),
                         _min_trunc(self.h_trunc, h_trunc))

    def map(self, fn) -> JetSeries:
        return JetSeries(self.d, {o: fn(c) for o, c in self.coeffs.items()}, self.t_trunc, self.h_trunc)

    def _coerce(self, other) -> JetSeries:
        if isinstance(other, JetSeries):
            if other.d != self.d:
                raise ValueError("dimension mismatch")
            return other
        if isinstance(other, SymExpr):
            return JetSeries.scalar(other)
        return JetSeries.scalar(SymExpr.const(self.d, other))

    def _combine(self, other, sign: int) -> JetSeries:
        o = self._coerce(other)
        tt = _min_trunc(self.t_trunc, o.t_trunc)
        ht = _min_trunc(self.h_trunc, o.h_trunc)
        out = dict(self.coeffs)
        for key, c in o.coeffs.items():
            prev = out.get(key)
            if sign > 0:
                out[key] = c if prev is None else prev + c
            else:
                out[key] = -c if prev is None else prev - c
        return JetSeries(self.d, out, tt, ht)

    def __add__(self, other):
        return self._combine(other, 1)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1)

    def __rsub__(self, other):
        return self._coerce(other)._combine(self, -1)

    def __neg__(self):
        return self.map(lambda c: -c)

    def mul(self, other, t_trunc: int | None = None, h_trunc: int | None = None) -> JetSeries:
        if not isinstance(other, JetSeries):
            if isinstance(other, SymExpr):
                return JetSeries(self.d, {o: c * other for o, c in self.coeffs.items()},
                                 _min_trunc(self.t_trunc, t_trunc), _min_trunc(self.h_trunc, h_trunc))
            return JetSeries(self.d, {o: c.scale(other) for o, c in self.coeffs.items()},
                             _min_trunc(self.t_trunc, t_trunc), _min_trunc(self.h_trunc, h_trunc))
        o = self._coerce(other)
        tt = _product_trunc(self, o, "t", t_trunc)
        ht = _product_trunc(self, o, "h", h_trunc)
        # sum raw products per slot, strip the doubled offset once at the end
        raw: dict[tuple[int, int], list] = {}
        for (k1, j1), c1 in self.coeffs.items():
            for (k2, j2), c2 in o.coeffs.items():
                k, j = k1 + k2, j1 + j2
                if (tt is not None and k >= tt) or (ht is not None and j >= ht):
                    continue
                re, im = _complex_product(c1, c2)
                slot = raw.get((k, j))
                if slot is None:
                    raw[(k, j)] = [re, im]
                else:
                    slot[0] += re
                    slot[1] += im
        acc: dict[tuple[int, int], SymExpr] = {}
        if raw:
            off = next(iter(self.coeffs.values())).layout.r_off
            for key, (re, im) in raw.items():
                acc[key] = SymExpr(self.d, re / off, im / off)
        return JetSeries(self.d, acc, tt, ht)

    def __mul__(self, other):
        return self.mul(other)

    __rmul__ = __mul__

    def shift(self, dt: int = 0, dh: int = 0) -> JetSeries:
        """Multiply by ``t**dt * h**dh``."""
        tt = None if self.t_trunc is None else self.t_trunc + dt
        ht = None if self.h_trunc is None else self.h_trunc + dh
        return JetSeries(self.d, {(k + dt, j + dh): c for (k, j), c in self.coeffs.items()}, tt, ht)

    def dt(self) -> JetSeries:
        out = {(k - 1, j): c.scale(k) for (k, j), c in self.coeffs.items() if k > 0}
        tt = None if self.t_trunc is None else max(self.t_trunc - 1, 0)
        return JetSeries(self.d, out, tt, self.h_trunc)

    def diff_y(self, i: int) -> JetSeries:
        return self.map(lambda c: c.diff_y(i))

    def diff_eta(self, i: int) -> JetSeries:
        return self.map(lambda c: c.diff_eta(i))

    def __eq__(self, other):
        if not isinstance(other, JetSeries):
            return NotImplemented
        return (self.d == other.d and self.coeffs == other.coeffs
                and self.t_trunc == other.t_trunc and self.h_trunc == other.h_trunc)

    def __repr__(self):
        body = ", ".join(f"{o}: {c}" for o, c in sorted(self.coeffs.items()))
        return f"JetSeries(d={self.d}, t_trunc={self.t_trunc}, h_trunc={self.h_trunc}, {{{body}}})"


def _product_trunc(a: JetSeries, b: JetSeries, var: str, requested):
    """Truncation order of a product: the lowest order either factor can spoil."""
    ta = a.t_trunc if var == "t" else a.h_trunc
    tb = b.t_trunc if var == "t" else b.h_trunc
    idx = 0 if var == "t" else 1
    lows = []
    if ta is not None:
        lows.append(ta + min((o[idx] for o in b.coeffs), default=ta))
    if tb is not None:
        lows.append(tb + min((o[idx] for o in a.coeffs), default=tb))
    bound = min(lows) if lows else None
    return _min_trunc(bound, requested)


def iter_multi_indices(n: int, max_order: int) -> Iterable[tuple[int, ...]]:
    """Multi-indices of length ``n`` with total order ``<= max_order``, graded order."""
    def rec(prefix, remaining, slots):
        if slots == 0:
            yield tuple(prefix)
            return
        for e in range(remaining, -1, -1):
            yield from rec(prefix + [e], remaining - e, slots - 1)

    for total in range(max_order + 1):
        for alpha in rec([], total, n):
            if sum(alpha) == total:
                yield alpha

