"""Rational expressions in z and parameters, with local Laurent expansion.

Expressions are parsed once into exact numerator/denominator polynomial pairs
over complex coefficients (decimal literals plus the constants i and pi).  No
simplification is attempted beyond collecting monomials.  All downstream
computation evaluates on a finite grid of parameter samples, so the heavy
lifting here is substitution of a sample followed by univariate series work.

Operator precedence: ^  >  unary -  >  * /  >  + -.  The exponent of ^ must
be an integer literal (an optional sign is allowed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExprSyntaxError, PoleEvaluationError, UnknownIdentifierError
from .series import PuiseuxSeries

_COEFF_EPS = 0.0  # coefficients combine exactly; nothing is dropped


class Poly:
    """Multivariate polynomial: {exponent tuple: complex}. Variable 0 is z."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for mono, c in terms.items():
                if c != 0:
                    self.terms[mono] = self.terms.get(mono, 0j) + c
            self.terms = {m: c for m, c in self.terms.items() if c != 0}

    @classmethod
    def const(cls, nvars, c):
        return cls(nvars, {(0,) * nvars: complex(c)} if c != 0 else {})

    @classmethod
    def var(cls, nvars, index):
        mono = tuple(1 if k == index else 0 for k in range(nvars))
        return cls(nvars, {mono: 1.0 + 0j})

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0j) + c
        return Poly(self.nvars, out)

    def __neg__(self):
        return Poly(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        out = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0j) + c1 * c2
        return Poly(self.nvars, out)

    def pow(self, n):
        result = Poly.const(self.nvars, 1.0)
        base = self
        k = n
        while k > 0:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def derivative(self, index):
        out = {}
        for m, c in self.terms.items():
            e = m[index]
            if e == 0:
                continue
            mm = list(m)
            mm[index] = e - 1
            mm = tuple(mm)
            out[mm] = out.get(mm, 0j) + c * e
        return Poly(self.nvars, out)

    def eval(self, values):
        total = 0j
        for m, c in self.terms.items():
            term = c
            for v, e in zip(values, m):
                if e:
                    term *= v**e
            total += term
        return total

    def degree(self, index):
        if not self.terms:
            return -1
        return max(m[index] for m in self.terms)

    def substitute_params(self, t):
        """Collapse parameter variables at a sample; returns {z_exp: complex}."""
        out = {}
        for m, c in self.terms.items():
            term = c
            for v, e in zip(t, m[1:]):
                if e:
                    term *= v**e
            out[m[0]] = out.get(m[0], 0j) + term
        return out

    def to_string(self, names):
        if not self.terms:
            return "0"
        parts = []
        for m in sorted(self.terms, reverse=True):
            c = self.terms[m]
            factors = []
            for name, e in zip(names, m):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            cs = _format_complex(c)
            if factors and c == 1:
                parts.append("*".join(factors))
            elif factors:
                parts.append(f"({cs})*" + "*".join(factors))
            else:
                parts.append(f"({cs})")
        return " + ".join(parts)


def _format_complex(c):
    re, im = c.real, c.imag
    if im == 0:
        return repr(re)
    if re == 0:
        return f"{im!r}*i"
    return f"{re!r}+{im!r}*i"


@dataclass
class ParamRational:
    """Quotient of multivariate polynomials in z and declared parameters."""

    numerator: Poly
    denominator: Poly
    params: tuple = ()

    def __post_init__(self):
        if self.denominator.is_zero():
            raise ZeroDivisionError("denominator is identically zero")

    @property
    def nvars(self):
        return self.numerator.nvars

    @classmethod
    def zero(cls, params=()):
        n = 1 + len(params)
        return cls(Poly(n), Poly.const(n, 1.0), tuple(params))

    @classmethod
    def constant(cls, c, params=()):
        n = 1 + len(params)
        return cls(Poly.const(n, c), Poly.const(n, 1.0), tuple(params))

    @classmethod
    def variable_z(cls, params=()):
        n = 1 + len(params)
        return cls(Poly.var(n, 0), Poly.const(n, 1.0), tuple(params))

    def is_zero(self):
        return self.numerator.is_zero()

    def __add__(self, other):
        return ParamRational(
            self.numerator * other.denominator + other.numerator * self.denominator,
            self.denominator * other.denominator,
            self.params,
        )

    def __neg__(self):
        return ParamRational(-self.numerator, self.denominator, self.params)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        return ParamRational(
            self.numerator * other.numerator,
            self.denominator * other.denominator,
            self.params,
        )

    def __truediv__(self, other):
        if other.numerator.is_zero():
            raise ZeroDivisionError("division by the zero rational")
        return ParamRational(
            self.numerator * other.denominator,
            self.denominator * other.numerator,
            self.params,
        )

    def pow(self, n):
        if n >= 0:
            return ParamRational(
                self.numerator.pow(n), self.denominator.pow(n), self.params
            )
        if self.numerator.is_zero():
            raise ZeroDivisionError("negative power of the zero rational")
        return ParamRational(
            self.denominator.pow(-n), self.numerator.pow(-n), self.params
        )

    def derivative(self, var_index):
        """d/dx_var by the quotient rule; index 0 is z, 1.. are parameters."""
        n = self.numerator
        d = self.denominator
        return ParamRational(
            n.derivative(var_index) * d - n * d.derivative(var_index),
            d * d,
            self.params,
        )

    def derivative_param(self, name):
        return self.derivative(1 + self.params.index(name))

    def eval(self, t, z):
        values = (complex(z),) + tuple(complex(v) for v in t)
        den = self.denominator.eval(values)
        if den == 0:
            raise PoleEvaluationError(z, tuple(t))
        num = self.numerator.eval(values)
        scale = sum(abs(c) for c in self.denominator.terms.values()) or 1.0
        if abs(den) < 1e-250 * scale:
            raise PoleEvaluationError(z, tuple(t))
        return num / den

    def substitute(self, t):
        """Fix a parameter sample; returns a univariate rational in z."""
        return UniRational.from_dicts(
            self.numerator.substitute_params(t),
            self.denominator.substitute_params(t),
        )

    def to_string(self):
        names = ("z",) + tuple(self.params)
        num = self.numerator.to_string(names)
        if self.denominator.terms == {(0,) * self.nvars: 1.0 + 0j}:
            return num
        return f"({num})/({self.denominator.to_string(names)})"


class UniRational:
    """Univariate rational in z, dense complex coefficients, ascending order."""

    __slots__ = ("num", "den")

    def __init__(self, num, den):
        self.num = _trim(np.asarray(num, dtype=complex))
        self.den = _trim(np.asarray(den, dtype=complex))
        if self.den.size == 0:
            raise ZeroDivisionError("zero denominator")

    @classmethod
    def from_dicts(cls, num_dict, den_dict):
        return cls(_dict_to_dense(num_dict), _dict_to_dense(den_dict))

    @classmethod
    def zero(cls):
        return cls([], [1.0])

    @classmethod
    def const(cls, c):
        return cls([c], [1.0])

    def is_zero(self):
        return self.num.size == 0

    def eval(self, z):
        den = np.polyval(self.den[::-1], z)
        if np.any(den == 0):
            raise PoleEvaluationError(z, ())
        num = np.polyval(self.num[::-1], z) if self.num.size else 0.0 * den
        return num / den

    def __add__(self, other):
        return UniRational(
            _padd(_pmul(self.num, other.den), _pmul(other.num, self.den)),
            _pmul(self.den, other.den),
        )

    def __neg__(self):
        return UniRational(-self.num, self.den)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        return UniRational(_pmul(self.num, other.num), _pmul(self.den, other.den))

    def derivative(self):
        n, d = self.num, self.den
        return UniRational(
            _padd(_pmul(_pder(n), d), -_pmul(n, _pder(d))), _pmul(d, d)
        )

    def shift(self, z0):
        """Rational in w where z = z0 + w."""
        return UniRational(_pshift(self.num, z0), _pshift(self.den, z0))

    def invert_variable(self):
        """Rational in w where z = 1/w."""
        dn, dd = self.num.size - 1, self.den.size - 1
        if dn < 0:
            return UniRational.zero()
        # num(1/w)/den(1/w) = w^(dd-dn) rev(num)/rev(den)
        num = self.num[::-1].copy()
        den = self.den[::-1].copy()
        k = dd - dn
        if k > 0:
            num = np.concatenate([np.zeros(k, dtype=complex), num])
        elif k < 0:
            den = np.concatenate([np.zeros(-k, dtype=complex), den])
        return UniRational(num, den)

    def laurent(self, order):
        """Laurent expansion at w = 0 through w**order.

        Returns (valuation, coeffs) with coeffs[k] the coefficient of
        w**(valuation + k).
        """
        if self.is_zero():
            return 0, np.zeros(max(order + 1, 1), dtype=complex)
        vn = _valuation(self.num)
        vd = _valuation(self.den)
        val = vn - vd
        n = self.num[vn:]
        d = self.den[vd:]
        nterms = order - val + 1
        if nterms <= 0:
            return val, np.zeros(0, dtype=complex)
        inv = _series_invert(d, nterms)
        ser = _pmul(n, inv)[:nterms]
        if ser.size < nterms:
            ser = np.concatenate([ser, np.zeros(nterms - ser.size, dtype=complex)])
        return val, ser

    def pole_order_at_zero(self):
        return max(0, _valuation(self.den) - _valuation(self.num)) if not self.is_zero() else 0


# dense polynomial helpers (ascending coefficients)

def _trim(c):
    c = np.asarray(c, dtype=complex)
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return np.zeros(0, dtype=complex)
    return c[: nz[-1] + 1]


def _dict_to_dense(d):
    d = {e: c for e, c in d.items() if c != 0}
    if not d:
        return np.zeros(0, dtype=complex)
    out = np.zeros(max(d) + 1, dtype=complex)
    for e, c in d.items():
        out[e] = c
    return out


def _pmul(a, b):
    if a.size == 0 or b.size == 0:
        return np.zeros(0, dtype=complex)
    return np.convolve(a, b)


def _padd(a, b):
    n = max(a.size, b.size)
    out = np.zeros(n, dtype=complex)
    out[: a.size] += a
    out[: b.size] += b
    return _trim(out)


def _pder(a):
    if a.size <= 1:
        return np.zeros(0, dtype=complex)
    return a[1:] * np.arange(1, a.size)


def _pshift(a, z0):
    """Coefficients of p(z0 + w) via Horner in (z0 + w)."""
    out = np.zeros(1, dtype=complex)
    for c in a[::-1]:
        # out <- out*(z0 + w) + c
        new = np.zeros(out.size + 1, dtype=complex)
        new[: out.size] += out * z0
        new[1:] += out
        new[0] += c
        out = _trim(new)
        if out.size == 0:
            out = np.zeros(1, dtype=complex)
    return _trim(out)


def _valuation(a):
    nz = np.nonzero(a)[0]
    return int(nz[0]) if nz.size else 0


def _series_invert(d, nterms):
    """Power-series inverse of d (d[0] != 0) through nterms coefficients."""
    inv = np.zeros(nterms, dtype=complex)
    inv[0] = 1.0 / d[0]
    for k in range(1, nterms):
        acc = 0j
        for j in range(1, min(k, d.size - 1) + 1):
            acc += d[j] * inv[k - j]
        inv[k] = -acc / d[0]
    return inv


# expression parsing

_CONSTANTS = {"i": 1j, "pi": complex(math.pi)}


class _Tokenizer:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.tokens = []
        self._scan()
        self.index = 0

    def _scan(self):
        text = self.text
        i = 0
        while i < len(text):
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            if ch.isdigit() or (ch == "." and i + 1 < len(text) and text[i + 1].isdigit()):
                j = i
                seen_dot = False
                while j < len(text) and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                    if text[j] == ".":
                        seen_dot = True
                    j += 1
                self.tokens.append(("num", text[i:j], i))
                i = j
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("name", text[i:j], i))
                i = j
                continue
            if ch in "+-*/^()":
                self.tokens.append((ch, ch, i))
                i += 1
                continue
            raise ExprSyntaxError(f"unexpected character {ch!r}", i)
        self.tokens.append(("end", "", len(text)))

    def peek(self):
        return self.tokens[self.index]

    def next(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok


class _Parser:
    """Recursive descent over: expr := term (('+'|'-') term)*;
    term := unary (('*'|'/') unary)*; unary := '-' unary | power;
    power := atom ['^' int]; atom := number | name | '(' expr ')'."""

    def __init__(self, text, params):
        self.toks = _Tokenizer(text)
        self.params = tuple(params)
        self.nvars = 1 + len(self.params)

    def parse(self):
        value = self._expr()
        kind, _, pos = self.toks.peek()
        if kind != "end":
            raise ExprSyntaxError("unexpected trailing input", pos)
        return value

    def _expr(self):
        value = self._term()
        while True:
            kind, _, _ = self.toks.peek()
            if kind == "+":
                self.toks.next()
                value = value + self._term()
            elif kind == "-":
                self.toks.next()
                value = value - self._term()
            else:
                return value

    def _term(self):
        value = self._unary()
        while True:
            kind, _, pos = self.toks.peek()
            if kind == "*":
                self.toks.next()
                value = value * self._unary()
            elif kind == "/":
                self.toks.next()
                rhs = self._unary()
                if rhs.numerator.is_zero():
                    raise ExprSyntaxError("division by zero expression", pos)
                value = value / rhs
            else:
                return value

    def _unary(self):
        kind, _, _ = self.toks.peek()
        if kind == "-":
            self.toks.next()
            return -self._unary()
        if kind == "+":
            self.toks.next()
            return self._unary()
        return self._power()

    def _power(self):
        base = self._atom()
        kind, _, _ = self.toks.peek()
        if kind != "^":
            return base
        self.toks.next()
        sign = 1
        kind, text, pos = self.toks.next()
        if kind in ("-", "+"):
            sign = -1 if kind == "-" else 1
            kind, text, pos = self.toks.next()
        if kind != "num" or "." in text:
            raise ExprSyntaxError("exponent must be an integer literal", pos)
        return base.pow(sign * int(text))

    def _atom(self):
        kind, text, pos = self.toks.next()
        if kind == "num":
            return ParamRational.constant(float(text), self.params)
        if kind == "name":
            if text == "z":
                return ParamRational.variable_z(self.params)
            if text in _CONSTANTS:
                return ParamRational.constant(_CONSTANTS[text], self.params)
            if text in self.params:
                idx = 1 + self.params.index(text)
                n = self.nvars
                return ParamRational(
                    Poly.var(n, idx), Poly.const(n, 1.0), self.params
                )
            raise UnknownIdentifierError(text, pos)
        if kind == "(":
            value = self._expr()
            kind2, _, pos2 = self.toks.next()
            if kind2 != ")":
                raise ExprSyntaxError("expected ')'", pos2)
            return value
        raise ExprSyntaxError(f"unexpected token {text!r}", pos)


def parse_rational_expr(text, params=()):
    """Parse an expression in z and the declared parameter names.

    Supported syntax: + - * /, integer ^, parentheses, decimal literals and
    the constants i, pi.  Round-trip printing re-parses to an equal value.
    """
    return _Parser(text, params).parse()


def eval_rational(r, t, z):
    """Evaluate r at a parameter sample t and a point z.

    Raises PoleEvaluationError at zeros of the denominator; never returns NaN.
    """
    return r.eval(t, z)


_INFINITY = "infinity"


def laurent_expand(r, t, origin, order):
    """Truncated Laurent expansion of r(., t) at a finite point or infinity.

    At a finite origin z0 the expansion variable is w = z - z0; at infinity
    it is the local coordinate w = 1/z.  Coefficients are returned as a
    PuiseuxSeries with ramification 1, valid through w**order.
    """
    uni = r.substitute(t)
    if origin == _INFINITY or (isinstance(origin, str) and origin == "inf"):
        local = uni.invert_variable()
    else:
        local = uni.shift(complex(origin))
    val, coeffs = local.laurent(order)
    if coeffs.size == 0:
        return PuiseuxSeries.zero(order=order)
    return PuiseuxSeries.from_complex(1, val, coeffs, order)


@dataclass
class ParameterGrid:
    """Finite list of parameter samples standing in for the polydisc.

    adjacency optionally declares which samples are neighbors; continuity
    diagnostics compare matched quantities along those edges only.
    """

    names: tuple
    samples: list
    adjacency: list = field(default_factory=list)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.samples = [tuple(complex(v) for v in s) for s in self.samples]
        if not self.samples:
            raise ValueError("parameter grid needs at least one sample")
        for s in self.samples:
            if len(s) != len(self.names):
                raise ValueError(
                    f"sample arity {len(s)} does not match parameter count "
                    f"{len(self.names)}"
                )

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)
