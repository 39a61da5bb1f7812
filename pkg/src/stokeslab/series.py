"""Truncated Puiseux series over scaled complex coefficients.

A series is a dense coefficient block over exponents lead/v .. order/v in the
ramified variable z**(1/v), known modulo O(z**((order+1)/v)).  Coefficients
are stored as mantissa-exponent pairs (see _scaled) so that factorially
divergent expansions never overflow.  Raw complex128 fast paths kick in when
the dynamic range allows.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from . import _scaled as sc
from .errors import SeriesError

_LN10 = math.log(10.0)


class PuiseuxSeries:
    """Truncated series sum_{j=lead..order} c_j z**(j/ram) + O(z**((order+1)/ram))."""

    __slots__ = ("ram", "lead", "mant", "exp10", "order")

    def __init__(self, ram, lead, mant, exp10, order, normalize=True):
        self.ram = int(ram)
        self.lead = int(lead)
        self.mant = np.asarray(mant, dtype=complex)
        self.exp10 = np.asarray(exp10, dtype=np.int64)
        self.order = int(order)
        if self.ram < 1:
            raise SeriesError("ramification must be a positive integer")
        if self.mant.size != self.order - self.lead + 1 and self.mant.size != 0:
            raise SeriesError("coefficient block does not match lead..order span")
        if normalize:
            self._strip_leading_zeros()
            self._reduce_ramification()

    # construction helpers

    @classmethod
    def zero(cls, ram=1, order=0):
        return cls(ram, order + 1, np.zeros(0, dtype=complex),
                   np.zeros(0, dtype=np.int64), order, normalize=False)

    @classmethod
    def one(cls, order=0):
        return cls.from_complex(1, 0, [1.0], order)

    @classmethod
    def from_complex(cls, ram, lead, coeffs, order=None):
        coeffs = np.asarray(coeffs, dtype=complex)
        if order is None:
            order = lead + coeffs.size - 1
        need = order - lead + 1
        if coeffs.size < need:
            coeffs = np.concatenate([coeffs, np.zeros(need - coeffs.size, dtype=complex)])
        elif coeffs.size > need:
            coeffs = coeffs[:need]
        m, e = sc.from_complex(coeffs)
        return cls(ram, lead, m, e, order)

    def _strip_leading_zeros(self):
        nz = np.nonzero(self.mant)[0]
        if nz.size == 0:
            self.lead = self.order + 1
            self.mant = np.zeros(0, dtype=complex)
            self.exp10 = np.zeros(0, dtype=np.int64)
            return
        k = int(nz[0])
        if k:
            self.lead += k
            self.mant = self.mant[k:]
            self.exp10 = self.exp10[k:]

    def _reduce_ramification(self):
        if self.ram == 1 or self.mant.size == 0:
            if self.mant.size == 0:
                self.ram = 1
            return
        support = np.nonzero(self.mant)[0] + self.lead
        g = self.ram
        for j in support:
            g = math.gcd(g, int(j))
            if g == 1:
                return
        if g <= 1:
            return
        new_lead = self.lead // g if self.lead % g == 0 else None
        if new_lead is None:
            return
        idx = np.arange(self.lead, self.order + 1)
        keep = idx % g == 0
        self.mant = self.mant[keep]
        self.exp10 = self.exp10[keep]
        self.lead = new_lead
        self.order = self.lead + self.mant.size - 1
        self.ram //= g

    # inspection

    def is_zero(self):
        return self.mant.size == 0

    @property
    def leading_exponent(self):
        """Leading exponent as an exact rational (None for the zero series)."""
        if self.is_zero():
            return None
        return Fraction(self.lead, self.ram)

    def coeff(self, j):
        """Coefficient of z**(j/ram) as complex128 (may overflow to inf)."""
        if j < self.lead or j > self.order or self.mant.size == 0:
            return 0j
        i = j - self.lead
        return complex(sc.to_complex(self.mant[i : i + 1], self.exp10[i : i + 1])[0])

    def coeffs_complex(self):
        """(lead, dense complex block).  Overflows become inf."""
        return self.lead, sc.to_complex(self.mant, self.exp10)

    def log10_abs(self):
        return sc.log10_abs(self.mant, self.exp10)

    def num_coeffs(self):
        return self.mant.size

    def __repr__(self):
        shown = []
        lead, c = self.coeffs_complex()
        for i, v in enumerate(c[:6]):
            if v != 0:
                shown.append(f"({v:.6g})*z^({lead + i}/{self.ram})")
        tail = " + ..." if self.mant.size > 6 else ""
        body = " + ".join(shown) if shown else "0"
        return f"<PuiseuxSeries {body}{tail} + O(z^({self.order + 1}/{self.ram}))>"

    # arithmetic

    def _with_ram(self, ram):
        """Re-express on a finer ramification grid (ram must be a multiple)."""
        if ram == self.ram:
            return self
        f = ram // self.ram
        if f * self.ram != ram:
            raise SeriesError("ramification refinement must be integral")
        if self.mant.size == 0:
            return PuiseuxSeries.zero(ram, self.order * f)
        n = self.mant.size
        mant = np.zeros((n - 1) * f + 1, dtype=complex)
        exp10 = np.zeros((n - 1) * f + 1, dtype=np.int64)
        mant[::f] = self.mant
        exp10[::f] = self.exp10
        lead = self.lead * f
        # truncation tightens to the coarse grid's guarantee
        order = self.order * f
        need = order - lead + 1
        if mant.size < need:
            mant = np.concatenate([mant, np.zeros(need - mant.size, dtype=complex)])
            exp10 = np.concatenate([exp10, np.zeros(need - exp10.size, dtype=np.int64)])
        return PuiseuxSeries(ram, lead, mant[:need], exp10[:need], order,
                             normalize=False)

    @staticmethod
    def _aligned(a, b):
        ram = a.ram * b.ram // math.gcd(a.ram, b.ram)
        return a._with_ram(ram), b._with_ram(ram), ram

    def __add__(self, other):
        a, b, ram = PuiseuxSeries._aligned(self, other)
        order = min(a.order, b.order)
        if a.is_zero() and b.is_zero():
            return PuiseuxSeries.zero(ram, order)
        lead = min(a.lead if not a.is_zero() else order + 1,
                   b.lead if not b.is_zero() else order + 1)
        n = order - lead + 1
        if n <= 0:
            return PuiseuxSeries.zero(ram, order)
        m = np.zeros(n, dtype=complex)
        e = np.zeros(n, dtype=np.int64)
        for s in (a, b):
            if s.is_zero():
                continue
            i0 = s.lead - lead
            span = min(s.mant.size, n - i0)
            if span <= 0:
                continue
            m[i0 : i0 + span], e[i0 : i0 + span] = sc.add(
                m[i0 : i0 + span], e[i0 : i0 + span],
                s.mant[:span], s.exp10[:span],
            )
        return PuiseuxSeries(ram, lead, m, e, order)

    def __neg__(self):
        return PuiseuxSeries(self.ram, self.lead, -self.mant, self.exp10.copy(),
                             self.order, normalize=False)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        a, b, ram = PuiseuxSeries._aligned(self, other)
        if a.is_zero() or b.is_zero():
            order = min(
                a.order + (b.lead if not b.is_zero() else 0),
                b.order + (a.lead if not a.is_zero() else 0),
            ) if not (a.is_zero() and b.is_zero()) else min(a.order, b.order)
            return PuiseuxSeries.zero(ram, order)
        order = min(a.order + b.lead, b.order + a.lead)
        lead = a.lead + b.lead
        n = order - lead + 1
        if sc.is_safe(a.exp10) and sc.is_safe(b.exp10):
            _, ca = a.coeffs_complex()
            _, cb = b.coeffs_complex()
            prod = np.convolve(ca, cb)[:n]
            return PuiseuxSeries.from_complex(ram, lead, prod, order)
        m, e = sc.conv(a.mant, a.exp10, b.mant, b.exp10)
        return PuiseuxSeries(ram, lead, m[:n], e[:n], order)

    def scalar_mul(self, c):
        if c == 0:
            return PuiseuxSeries.zero(self.ram, self.order)
        m, e = sc.scale(self.mant, self.exp10, complex(c))
        return PuiseuxSeries(self.ram, self.lead, m, e, self.order)

    def shift(self, k):
        """Multiply by z**(k/ram): exponent shift by k grid units."""
        return PuiseuxSeries(self.ram, self.lead + k, self.mant.copy(),
                             self.exp10.copy(), self.order + k, normalize=False)

    def truncate(self, order):
        if order >= self.order:
            return self
        n = max(order - self.lead + 1, 0)
        return PuiseuxSeries(self.ram, self.lead if n else order + 1,
                             self.mant[:n], self.exp10[:n], order)

    def invert(self):
        """Multiplicative inverse; requires a nonzero leading coefficient."""
        if self.is_zero():
            raise SeriesError("cannot invert a series that is zero to its order")
        rel = self.order - self.lead  # relative precision
        lead_inv = -self.lead
        order_out = lead_inv + rel
        if sc.is_safe(self.exp10):
            _, c = self.coeffs_complex()
            inv = np.zeros(rel + 1, dtype=complex)
            inv[0] = 1.0 / c[0]
            for k in range(1, rel + 1):
                acc = 0j
                for j in range(1, k + 1):
                    acc += c[j] * inv[k - j]
                inv[k] = -acc / c[0]
            return PuiseuxSeries.from_complex(self.ram, lead_inv, inv, order_out)
        # scaled recursion
        m = np.zeros(rel + 1, dtype=complex)
        e = np.zeros(rel + 1, dtype=np.int64)
        m0, e0 = sc.normalize(np.array([1.0 / self.mant[0]]),
                              np.array([-self.exp10[0]]))
        m[0], e[0] = m0[0], e0[0]
        for k in range(1, rel + 1):
            tm = self.mant[1 : k + 1] * m[k - 1 :: -1][: k]
            te = self.exp10[1 : k + 1] + e[k - 1 :: -1][: k]
            nzm = np.abs(tm) > 0
            if np.any(nzm):
                emax = int(np.max(te[nzm]))
                with np.errstate(under="ignore"):
                    s = np.sum(tm[nzm] * 10.0 ** (te[nzm] - emax).astype(float))
            else:
                s, emax = 0j, 0
            mm, ee = sc.normalize(np.array([-s * m0[0]]),
                                  np.array([emax + e0[0]]))
            m[k], e[k] = mm[0], ee[0]
        return PuiseuxSeries(self.ram, lead_inv, m, e, order_out)

    def differentiate(self):
        """Termwise d/dz; the exponent drops by one whole power of z."""
        if self.is_zero():
            return PuiseuxSeries.zero(self.ram, self.order - self.ram)
        j = np.arange(self.lead, self.order + 1)
        factors = j.astype(float) / self.ram
        m, e = sc.normalize(self.mant * factors, self.exp10)
        return PuiseuxSeries(self.ram, self.lead - self.ram, m, e,
                             self.order - self.ram)

    def evaluate(self, log_z, terms=None):
        """Partial sum at exp(log_z); log_z fixes the fractional-power branch."""
        if self.is_zero():
            return 0j
        n = self.mant.size if terms is None else min(terms, self.mant.size)
        j = np.arange(self.lead, self.lead + n)
        # term_j = c_j * exp((j/ram) log z), accumulated in scaled space
        lt = (j.astype(float) / self.ram) * log_z
        m, e = sc.shift_log10(self.mant[:n] * np.exp(1j * lt.imag),
                              self.exp10[:n], lt.real / _LN10)
        nz = np.abs(m) > 0
        if not np.any(nz):
            return 0j
        emax = int(np.max(e[nz]))
        with np.errstate(under="ignore"):
            s = np.sum(m[nz] * 10.0 ** (e[nz] - emax).astype(float))
        if emax > 300:
            raise OverflowError("series partial sum overflows complex128")
        return complex(s * 10.0**emax)


def series_arith(op, a, b=None):
    """Dispatcher for the four ring operations on truncated series."""
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "invert":
        return a.invert()
    if op == "differentiate":
        return a.differentiate()
    raise ValueError(f"unknown series operation {op!r}")


def borel_transform(s, k):
    """Formal Borel transform of order k: divide c_n by Gamma(1 + n/k).

    n is the exponent of z (a rational j/ram).  Laurent tails are rejected.
    The division runs on log10 magnitudes so no raw Gamma value is formed.
    """
    if s.is_zero():
        return s
    if s.lead < 0:
        raise SeriesError("Borel transform requires a non-negative leading exponent")
    kf = float(k)
    if kf <= 0:
        raise SeriesError("Borel order must be positive")
    j = np.arange(s.lead, s.order + 1)
    n_over_k = (j.astype(float) / s.ram) / kf
    lg10 = gammaln(1.0 + n_over_k) / _LN10
    m, e = sc.shift_log10(s.mant, s.exp10, -lg10)
    return PuiseuxSeries(s.ram, s.lead, m, e, s.order)


def gevrey_order_estimate(s, min_coeffs=40):
    """Estimate the Gevrey level k from coefficient growth |c_n| ~ B**n (n!)**(1/k).

    Fits log|c_n| against n log n and n; the reciprocal slope of the n log n
    term is snapped to a rational with denominator at most 12.  Returns that
    Fraction, or the string "convergent" when the factorial exponent is
    below 0.05.
    """
    if s.num_coeffs() < min_coeffs:
        raise SeriesError(
            f"need at least {min_coeffs} coefficients, have {s.num_coeffs()}"
        )
    j = np.arange(s.lead, s.order + 1).astype(float) / s.ram
    logs = s.log10_abs() * _LN10
    good = np.isfinite(logs) & (j > 1.0)
    j, logs = j[good], logs[good]
    if j.size < 12:
        return "convergent"
    # drop the pre-asymptotic head
    cut = j.size // 4
    j, logs = j[cut:], logs[cut:]
    design = np.column_stack([j * np.log(j), j, np.ones_like(j)])
    coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
    sigma = float(coef[0])
    if sigma < 0.05:
        return "convergent"
    return Fraction(1.0 / sigma).limit_denominator(12)


class PadeResult:
    """Rational approximant p/q with the degrees actually used.

    reduced is True when rank deficiency forced the requested (m, n) down.
    """

    __slots__ = ("num", "den", "m", "n", "m_requested", "n_requested")

    def __init__(self, num, den, m, n, m_requested, n_requested):
        self.num = np.asarray(num, dtype=complex)
        self.den = np.asarray(den, dtype=complex)
        self.m = m
        self.n = n
        self.m_requested = m_requested
        self.n_requested = n_requested

    @property
    def reduced(self):
        return (self.m, self.n) != (self.m_requested, self.n_requested)

    def __call__(self, u):
        u = np.asarray(u, dtype=complex)
        return np.polyval(self.num[::-1], u) / np.polyval(self.den[::-1], u)

    def poles(self):
        if self.den.size <= 1:
            return np.zeros(0, dtype=complex)
        return np.roots(self.den[::-1])

    def as_param_rational(self):
        from .expr import ParamRational, Poly

        num = Poly(1, {(int(i),): complex(c) for i, c in enumerate(self.num) if c != 0})
        den = Poly(1, {(int(i),): complex(c) for i, c in enumerate(self.den) if c != 0})
        return ParamRational(num, den, ())


def pade_approximant(s, m, n, rank_tol=1e-10):
    """(m, n) Pade approximant of an unramified series with leading exponent 0.

    Solves the Toeplitz system for the denominator with full pivoting via SVD;
    rank-deficient systems reduce n to the numerical rank and report it in the
    result.  The approximant's Taylor expansion matches s through order m + n.
    """
    if s.ram != 1:
        raise SeriesError("Pade approximation requires an unramified series")
    if not s.is_zero() and s.lead < 0:
        raise SeriesError("Pade approximation requires leading exponent >= 0")
    if s.is_zero():
        if n > 0:
            raise SeriesError("all-zero input with a nonzero denominator degree")
        return PadeResult([0.0], [1.0], 0, 0, m, n)
    if s.num_coeffs() + s.lead < m + n + 1:
        raise SeriesError(
            f"need {m + n + 1} coefficients for a ({m},{n}) approximant, "
            f"have {s.num_coeffs() + s.lead}"
        )
    c = np.zeros(m + n + 1, dtype=complex)
    lead, block = s.coeffs_complex()
    for i, v in enumerate(block):
        if 0 <= lead + i <= m + n:
            c[lead + i] = v

    m_eff, n_eff = m, n
    while True:
        if n_eff == 0:
            den = np.array([1.0 + 0j])
            break
        T = np.zeros((n_eff, n_eff), dtype=complex)
        rhs = np.zeros(n_eff, dtype=complex)
        for i in range(n_eff):
            rhs[i] = -c[m_eff + 1 + i]
            for jj in range(n_eff):
                idx = m_eff + i - jj
                T[i, jj] = c[idx] if idx >= 0 else 0.0
        u_svd, sv, vh = np.linalg.svd(T)
        scale = sv[0] if sv.size and sv[0] > 0 else 1.0
        rank = int(np.sum(sv > rank_tol * scale))
        if rank == n_eff:
            b = vh.conj().T @ ((u_svd.conj().T @ rhs) / sv)
            den = np.concatenate([[1.0 + 0j], b])
            break
        n_eff = rank
        m_eff = min(m_eff, m - (n - rank))
        if m_eff < 0:
            m_eff = 0
    num = np.convolve(c[: m_eff + n_eff + 1], den)[: m_eff + 1]
    return PadeResult(num, den, m_eff, n_eff, m, n)
