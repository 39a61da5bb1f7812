"""Scalar differential operators with Laurent-series coefficients.

Internal machinery for the formal-solution pipeline: raw complex Laurent
series (class LS), operator algebra (composition, exponential twist,
ramification), Newton polygons, and the iterated polygon / Frobenius solver
that produces the exponential parts and tail expansions of all local
solutions at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ResonanceError, RootSolveError, SeriesError

_VAL_RTOL = 1e-12  # relative threshold for treating coefficients as zero
_CLUSTER_TOL = 1e-8  # eigenvalue / root clustering tolerance


class LS:
    """Raw Laurent series: dense complex coefficients val..upto in one variable."""

    __slots__ = ("val", "c", "upto")

    def __init__(self, val, c, upto=None):
        self.c = np.asarray(c, dtype=complex)
        self.val = int(val)
        self.upto = int(upto) if upto is not None else self.val + self.c.size - 1
        need = self.upto - self.val + 1
        if self.c.size < need:
            self.c = np.concatenate([self.c, np.zeros(need - self.c.size, complex)])
        elif self.c.size > need:
            self.c = self.c[:need]

    @classmethod
    def zero(cls, upto):
        return cls(upto + 1, np.zeros(0, complex), upto)

    @classmethod
    def const(cls, value, upto):
        return cls(0, np.full(1, value, complex), upto)

    @classmethod
    def monomial(cls, value, exp, upto):
        return cls(exp, np.full(1, value, complex), upto)

    def is_zero(self, rtol=_VAL_RTOL):
        if self.c.size == 0:
            return True
        mx = np.max(np.abs(self.c))
        return mx == 0.0

    def scale_max(self):
        return float(np.max(np.abs(self.c))) if self.c.size else 0.0

    def valuation(self, rtol=_VAL_RTOL):
        """Index of the first coefficient above the noise floor; None if zero."""
        if self.c.size == 0:
            return None
        mx = np.max(np.abs(self.c))
        if mx == 0.0:
            return None
        nz = np.nonzero(np.abs(self.c) > rtol * mx)[0]
        return self.val + int(nz[0]) if nz.size else None

    def coeff(self, j):
        if self.val <= j <= self.upto and self.c.size:
            return complex(self.c[j - self.val])
        return 0j

    def trimmed(self):
        """Strip exact leading zeros."""
        nz = np.nonzero(self.c)[0]
        if nz.size == 0:
            return LS.zero(self.upto)
        k = int(nz[0])
        return LS(self.val + k, self.c[k:], self.upto)

    def __add__(self, other):
        upto = min(self.upto, other.upto)
        if self.c.size == 0 and other.c.size == 0:
            return LS.zero(upto)
        val = min(self.val if self.c.size else upto + 1,
                  other.val if other.c.size else upto + 1)
        n = upto - val + 1
        if n <= 0:
            return LS.zero(upto)
        out = np.zeros(n, complex)
        for s in (self, other):
            if s.c.size == 0:
                continue
            i0 = s.val - val
            span = min(s.c.size, n - i0)
            if span > 0:
                out[i0 : i0 + span] += s.c[:span]
        return LS(val, out, upto).trimmed()

    def __neg__(self):
        return LS(self.val, -self.c, self.upto)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if self.c.size == 0 or other.c.size == 0:
            upto = min(
                self.upto + (other.val if other.c.size else 0),
                other.upto + (self.val if self.c.size else 0),
            )
            return LS.zero(upto)
        upto = min(self.upto + other.val, other.upto + self.val)
        val = self.val + other.val
        n = upto - val + 1
        prod = np.convolve(self.c, other.c)[:n]
        return LS(val, prod, upto).trimmed()

    def scalar(self, a):
        return LS(self.val, self.c * a, self.upto)

    def shift(self, k):
        return LS(self.val + k, self.c.copy(), self.upto + k)

    def deriv(self):
        if self.c.size == 0:
            return LS.zero(self.upto - 1)
        j = np.arange(self.val, self.upto + 1)
        return LS(self.val - 1, self.c * j, self.upto - 1).trimmed()

    def invert(self):
        v = self.valuation()
        if v is None:
            raise SeriesError("inverting a zero Laurent series")
        k = v - self.val
        d = self.c[k:]
        n = d.size
        inv = np.zeros(n, complex)
        inv[0] = 1.0 / d[0]
        for i in range(1, n):
            inv[i] = -np.dot(d[1 : i + 1], inv[i - 1 :: -1][:i]) / d[0]
        return LS(-v, inv, -v + n - 1)

    def rescale_exponents(self, b):
        """Substitute variable -> variable**b (exponents multiply by b)."""
        if self.c.size == 0:
            return LS.zero(self.upto * b)
        n = (self.c.size - 1) * b + 1
        out = np.zeros(n, complex)
        out[::b] = self.c
        return LS(self.val * b, out, self.upto * b)

    def eval(self, w):
        if self.c.size == 0:
            return 0j
        return complex(np.polyval(self.c[::-1], w) * w**self.val)

    def __repr__(self):
        parts = [
            f"({v:.4g})w^{self.val + i}"
            for i, v in enumerate(self.c[:5])
            if v != 0
        ]
        more = "+..." if self.c.size > 5 else ""
        return f"LS[{' + '.join(parts) or '0'}{more}; O(w^{self.upto + 1})]"


class DiffOp:
    """Sum p_k(w) D^k with Laurent-series coefficients, D = d/dw."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        self.coeffs = list(coeffs)
        while len(self.coeffs) > 1 and self.coeffs[-1].is_zero():
            self.coeffs.pop()

    @property
    def order(self):
        return len(self.coeffs) - 1

    def work_order(self):
        return min(p.upto for p in self.coeffs)

    def is_zero(self):
        return all(p.is_zero() for p in self.coeffs)

    def left_mul_d_plus(self, g):
        """Compose (D + g) o self; g a Laurent series (or None for plain D)."""
        upto = self.work_order()
        out = [LS.zero(upto) for _ in range(len(self.coeffs) + 2)]
        for k, p in enumerate(self.coeffs):
            out[k + 1] = out[k + 1] + p
            out[k] = out[k] + p.deriv()
            if g is not None:
                out[k] = out[k] + g * p
        return DiffOp(out)

    def twist(self, g):
        """Conjugate by exp(int g): D -> D + g, annihilating exp(-int g) * y."""
        # (sum p_k D^k) with D replaced by (D+g): build (D+g)^k iteratively
        upto = min(self.work_order(), g.upto if g.c.size else self.work_order())
        acc = DiffOp([LS.zero(upto)])
        power = DiffOp([LS.const(1.0, upto)])  # (D+g)^0
        for k, p in enumerate(self.coeffs):
            if k > 0:
                power = power.left_mul_d_plus(g)
            term = [p * q for q in power.coeffs]
            n = max(len(acc.coeffs), len(term))
            coeffs = []
            for i in range(n):
                a = acc.coeffs[i] if i < len(acc.coeffs) else LS.zero(upto)
                b = term[i] if i < len(term) else LS.zero(upto)
                coeffs.append(a + b)
            acc = DiffOp(coeffs)
        return acc

    def ramify(self, b):
        """Substitute z = w**b; returns the operator in w annihilating y(w**b)."""
        if b == 1:
            return self
        upto = self.work_order() * b
        # T = (w^(1-b)/b) D
        acc = DiffOp([LS.zero(upto)])
        power = DiffOp([LS.const(1.0, upto)])
        s = LS.monomial(1.0 / b, 1 - b, upto)
        for k, p in enumerate(self.coeffs):
            if k > 0:
                # T o power
                new = [LS.zero(upto) for _ in range(len(power.coeffs) + 2)]
                for j, q in enumerate(power.coeffs):
                    new[j] = new[j] + s * q.deriv()
                    new[j + 1] = new[j + 1] + s * q
                power = DiffOp(new)
            pb = p.rescale_exponents(b)
            term = [pb * q for q in power.coeffs]
            n = max(len(acc.coeffs), len(term))
            coeffs = []
            for i in range(n):
                a = acc.coeffs[i] if i < len(acc.coeffs) else LS.zero(upto)
                bb = term[i] if i < len(term) else LS.zero(upto)
                coeffs.append(a + bb)
            acc = DiffOp(coeffs)
        return acc

    def scale_normalize(self):
        """Divide all coefficients by the largest magnitude present."""
        mx = max((p.scale_max() for p in self.coeffs), default=0.0)
        if mx == 0.0 or mx == 1.0:
            return self
        return DiffOp([p.scalar(1.0 / mx) for p in self.coeffs])

    def newton_points(self):
        """(k, val(p_k) - k) for coefficients that are not numerically zero."""
        pts = []
        gmax = max((p.scale_max() for p in self.coeffs), default=0.0)
        if gmax == 0.0:
            raise SeriesError("zero operator has no Newton polygon")
        for k, p in enumerate(self.coeffs):
            if p.c.size == 0:
                continue
            nz = np.nonzero(np.abs(p.c) > _VAL_RTOL * gmax)[0]
            if nz.size == 0:
                continue
            pts.append((k, p.val + int(nz[0]) - k))
        return pts


def newton_polygon(op):
    """Lower-hull edges [(slope, k_lo, k_hi)] of the differential Newton polygon.

    Points are (k, val(p_k) - k); slopes are ascending exact rationals.
    Positive slopes are the candidate degrees of exponential parts.
    """
    pts = op.newton_points()
    if not pts:
        raise SeriesError("zero operator")
    pts.sort()
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # keep only lower-convex turns
            if (y2 - y1) * (p[0] - x1) >= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    edges = []
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        edges.append((Fraction(y2 - y1, x2 - x1), x1, x2))
    return edges


def edge_char_poly(op, slope, k_lo, k_hi):
    """Characteristic polynomial of a polygon edge, coefficients by c**k.

    Only lattice points on the edge line contribute; the returned array is
    indexed from k_lo (constant term) to k_hi.
    """
    y_lo = op.coeffs[k_lo].valuation() - k_lo
    chi = np.zeros(k_hi - k_lo + 1, complex)
    for k in range(k_lo, min(k_hi, op.order) + 1):
        y = y_lo + Fraction(k - k_lo) * slope
        if y.denominator != 1:
            continue
        chi[k - k_lo] = op.coeffs[k].coeff(int(y) + k)
    return chi


def _cluster_roots(roots, tol=_CLUSTER_TOL):
    """Group a root list into (value, multiplicity), tolerance-relative."""
    if len(roots) == 0:
        return []
    roots = sorted(roots, key=lambda r: (round(r.real, 12), round(r.imag, 12)))
    scale = max(max(abs(r) for r in roots), 1.0)
    groups = []
    for r in roots:
        for g in groups:
            if abs(r - g[0][0]) <= tol * scale * 10:
                g.append((r, 1))
                break
        else:
            groups.append([(r, 1)])
    out = []
    for g in groups:
        vals = [x[0] for x in g]
        out.append((sum(vals) / len(vals), len(vals)))
    return out


def _poly_newton_polish(coeffs, root):
    """One Newton step on sum coeffs[k] c**k."""
    p = np.polynomial.polynomial.polyval(root, coeffs)
    dp = np.polynomial.polynomial.polyval(
        root, np.polynomial.polynomial.polyder(coeffs)
    )
    if dp != 0:
        return root - p / dp
    return root


@dataclass
class FrobeniusChain:
    """Solutions sharing an exponent cluster: tails[k][l][n] is the
    coefficient of w**(beta0+n) (log w)**l / l! in solution k."""

    beta0: complex
    tails: np.ndarray  # shape (n_solutions, depth+1, n_terms)
    resonant: bool


@dataclass
class ScalarBranch:
    """A family of local scalar solutions with a common exponential part.

    q maps negative w-exponents to coefficients: q(w) = sum q[j] w**j.
    Solutions are exp(q) * w**beta0 * sum_l (log w)**l / l! * tails[k][l].
    All data is expressed in the branch's own ramified variable w = z**(1/ram).
    """

    ram: int
    q: dict
    chain: FrobeniusChain

    @property
    def size(self):
        return self.chain.tails.shape[0]


def indicial_data(op, nterms):
    """Indicial polynomial and the psi_j ladder of the slope-0 part.

    Returns (estar, psi) where psi[j] is the coefficient array (in beta) of
    psi_j, psi_0 being the indicial polynomial, for j = 0..nterms.
    """
    pts = op.newton_points()
    estar = min(v for _, v in pts)
    r = op.order
    # falling factorial polynomials ff(beta, k), coefficient arrays in beta
    ff = [np.array([1.0 + 0j])]
    for k in range(1, r + 1):
        prev = ff[-1]
        # ff_k = ff_{k-1} * (beta - (k-1))
        new = np.zeros(prev.size + 1, complex)
        new[1:] += prev
        new[: prev.size] += prev * (-(k - 1))
        ff.append(new)
    psi = []
    for j in range(nterms + 1):
        acc = np.zeros(r + 2, complex)
        for k in range(r + 1):
            a = op.coeffs[k].coeff(estar + j + k)
            if a != 0:
                acc[: ff[k].size] += a * ff[k]
        psi.append(np.trim_zeros(acc, "b") if np.any(acc) else np.zeros(1, complex))
    return estar, psi


def _polyval(coeffs, x):
    return complex(np.polynomial.polynomial.polyval(x, coeffs))


def _polyder(coeffs, order):
    out = coeffs
    for _ in range(order):
        out = np.polynomial.polynomial.polyder(out)
        if out.size == 0:
            return np.zeros(1, complex)
    return out


def frobenius_chain(psi, beta0, offsets, nterms, res_tol=1e-8):
    """Tail expansions for one integer-spaced cluster of indicial roots.

    offsets is [(n_i, m_i)]: beta0 + n_i is a root of the indicial polynomial
    with multiplicity m_i, n_0 = 0 < n_1 < ...  Returns a FrobeniusChain with
    sum(m_i) solutions.  The log ladder at each step n solves the
    upper-triangular Toeplitz system with diagonal ind(beta0+n); resonant
    steps leave mult free slots and must satisfy consistency rows, otherwise
    ResonanceError reports the offending index.
    """
    ind = psi[0]
    total = sum(m for _, m in offsets)
    depth = total - 1
    off_map = {int(n): m for n, m in offsets}
    scale_ind = max(float(np.max(np.abs(ind))), 1.0)
    psi_der = [[_polyder(p, d) for d in range(depth + 1)] for p in psi]

    def run(activation_n, activation_l):
        c = np.zeros((nterms + 1, depth + 1), complex)
        for n in range(nterms + 1):
            rhs = np.zeros(depth + 1, complex)
            rhs_abs = np.zeros(depth + 1)
            for r in range(depth + 1):
                acc = 0j
                acc_abs = 0.0
                jmax = min(n, len(psi) - 1)
                for j in range(1, jmax + 1):
                    col = c[n - j]
                    for l in range(r, depth + 1):
                        if col[l] == 0:
                            continue
                        term = (
                            _polyval(psi_der[j][l - r], beta0 + n - j)
                            / math.factorial(l - r)
                            * col[l]
                        )
                        acc += term
                        acc_abs += abs(term)
                rhs[r] = -acc
                rhs_abs[r] = acc_abs
            # Toeplitz diagonals T[d] = ind^{(d)}(beta0+n)/d!
            T = np.array(
                [_polyval(psi_der[0][d], beta0 + n) / math.factorial(d)
                 for d in range(depth + 1)]
            )
            mu = off_map.get(n, 0)
            if mu == 0 and abs(T[0]) <= res_tol * scale_ind:
                raise ResonanceError(n, "indicial value vanishes off-cluster")
            if 0 < mu <= depth and abs(T[mu]) <= res_tol * scale_ind:
                raise ResonanceError(n, "degenerate resonance ladder")
            col = np.zeros(depth + 1, complex)
            for l in range(mu):
                col[l] = 1.0 if (n == activation_n and l == activation_l) else 0.0
            # rows r = depth-mu .. 0 determine col[r+mu] (T[d]=0 for d<mu)
            for r in range(depth - mu, -1, -1):
                acc = rhs[r]
                for l in range(r + mu + 1, depth + 1):
                    acc -= T[l - r] * col[l]
                col[r + mu] = acc / T[mu]
            # rows r > depth-mu have empty left side: consistency
            for r in range(depth - mu + 1, depth + 1):
                if abs(rhs[r]) > 1e-6 * (1.0 + rhs_abs[r]):
                    raise ResonanceError(n, f"inconsistent resonance ({abs(rhs[r]):.2e})")
            c[n] = col
        return c

    sols = []
    for n_i, m_i in offsets:
        for rho in range(m_i):
            c = run(int(n_i), rho)
            sols.append(c.T)  # (depth+1, nterms+1)
    tails = np.stack(sols, axis=0)
    return FrobeniusChain(
        beta0=beta0,
        tails=tails,
        resonant=any(n > 0 or m > 1 for n, m in offsets),
    )


def _integer_clusters(root_mults):
    """Group indicial roots into integer-spaced chains.

    Input [(root, mult)]; output [(beta0, [(offset, mult), ...])] with offsets
    ascending non-negative integers from the chain's smallest member.
    """
    chains = []
    for r, m in sorted(root_mults, key=lambda x: (x[0].real, x[0].imag)):
        placed = False
        for chain in chains:
            d = r - chain[0][0]
            n = round(d.real)
            if abs(d - n) <= 1e-7 * max(1.0, abs(r)) and n >= 0:
                chain.append((r, m, n))
                placed = True
                break
        if not placed:
            chains.append([(r, m, 0)])
    out = []
    for chain in chains:
        beta0 = chain[0][0]
        offsets = sorted((int(n), m) for _, m, n in chain)
        out.append((beta0, offsets))
    return out


def _slope_zero_roots(op):
    """Indicial roots (with multiplicity) of the slope-0 part of the polygon."""
    pts = op.newton_points()
    estar = min(v for _, v in pts)
    k_hi = max(k for k, v in pts if v == estar)
    if k_hi == 0:
        return []
    _, psi = indicial_data(op, 0)
    ind = psi[0]
    deg = ind.size - 1
    while deg > 0 and ind[deg] == 0:
        deg -= 1
    if deg == 0:
        return []
    roots = np.roots(ind[: deg + 1][::-1])
    for _ in range(2):
        roots = np.array([_poly_newton_polish(ind, r) for r in roots])
    return _cluster_roots(list(roots))


def scalar_local_solutions(op, target_terms, max_depth=40):
    """All formal solutions of op at the origin via the iterated polygon.

    target_terms is the number of tail coefficients wanted per unit power of
    the original variable; branches carry their own total ramification.
    Returns a list of ScalarBranch whose sizes sum to the operator order.
    """
    branches = []
    _solve_branches(op, 1, {}, None, target_terms, 0, max_depth, branches)
    total = sum(b.size for b in branches)
    if total != op.order:
        raise RootSolveError(
            f"found {total} local solutions for an order-{op.order} operator"
        )
    return branches


def _solve_branches(op, ram, q, slope_cap, target_terms, depth, max_depth, out):
    if depth > max_depth:
        raise RootSolveError("polygon recursion exceeded the depth limit")
    op = op.scale_normalize()
    edges = newton_polygon(op)
    pos = [e for e in edges if e[0] > 0]
    if slope_cap is not None:
        pos = [e for e in pos if e[0] < slope_cap]
    # clear fractional slopes by a single ramification at this level
    denom = 1
    for s, _, _ in pos:
        denom = denom * s.denominator // math.gcd(denom, s.denominator)
    if denom > 1:
        op2 = op.ramify(denom)
        q2 = {j * denom: c for j, c in q.items()}
        cap2 = slope_cap * denom if slope_cap is not None else None
        _solve_branches(op2, ram * denom, q2, cap2, target_terms, depth + 1,
                        max_depth, out)
        return

    # tails at this level: slope-0 part with the accumulated exponential part
    root_mults = _slope_zero_roots(op)
    if root_mults:
        nterms = _available_terms(op, target_terms * ram)
        _, psi = indicial_data(op, nterms)
        for beta0, offsets in _integer_clusters(root_mults):
            span = max(n for n, _ in offsets)
            chain = frobenius_chain(psi, beta0, offsets, nterms + span)
            out.append(ScalarBranch(ram=ram, q=dict(q), chain=chain))

    for s, k_lo, k_hi in pos:
        s_int = int(s)
        chi = edge_char_poly(op, s, k_lo, k_hi)
        chi_trim = np.trim_zeros(chi, "b")
        if chi_trim.size <= 1:
            raise RootSolveError("edge characteristic polynomial is degenerate")
        roots = np.roots(chi_trim[::-1])
        roots = roots[np.abs(roots) > 1e-10 * max(np.max(np.abs(roots)), 1.0)]
        for _ in range(2):
            roots = np.array([_poly_newton_polish(chi_trim, r) for r in roots])
        for c, mult in _cluster_roots(list(roots)):
            g = LS.monomial(c, -s_int - 1, op.work_order())
            op_t = op.twist(g)
            q_t = dict(q)
            q_t[-s_int] = q_t.get(-s_int, 0j) + (-c / s_int)
            sub = []
            _solve_branches(op_t, ram, q_t, s, target_terms, depth + 1,
                            max_depth, sub)
            if sum(b.size for b in sub) != mult:
                raise RootSolveError(
                    f"edge root multiplicity {mult} but twisted operator "
                    f"yielded {sum(b.size for b in sub)} solutions"
                )
            out.extend(sub)


def _available_terms(op, wanted):
    """Tail terms supported by the operator's truncation (capped at wanted)."""
    pts = op.newton_points()
    estar = min(v for _, v in pts)
    avail = min(p.upto - k for k, p in enumerate(op.coeffs)) - estar
    return max(min(wanted, avail), 4)
