"""Formal fundamental solutions at a singular point, per parameter sample.

The pipeline: reduce the local system to a scalar operator (companion and
diagonal systems bypass the cyclic-vector search), run the iterated Newton
polygon to get exponential parts and Frobenius tails, transport the scalar
solutions back through the gauge, and assemble the triple (Hhat, L, Q) in
the canonical normalization.  Formal monodromy, the 2*pi*i matrix logarithm
and the unramified form live here as well.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import expm, logm

from . import _scaled as sc
from .errors import CyclicVectorError, SeriesError, StokeslabError
from .operators import (
    LS,
    DiffOp,
    ScalarBranch,
    newton_polygon as _op_newton_polygon,
    scalar_local_solutions,
)
from .series import PuiseuxSeries
from .systems import INFINITY, ParamSystem

_Q_TOL = 1e-9


@dataclass(frozen=True)
class ExponentialPart:
    """q(z) = sum_{j=1..k} coeffs[j-1] z**(-j/ram), no constant term."""

    ram: int
    coeffs: tuple

    @classmethod
    def from_dict(cls, ram, q):
        """Build from {negative w-exponent: coeff} with w = z**(1/ram)."""
        if not q:
            return cls(ram, ())
        k = max(-j for j in q)
        coeffs = [0j] * k
        for j, c in q.items():
            coeffs[-j - 1] = complex(c)
        while coeffs and abs(coeffs[-1]) < 1e-14:
            coeffs.pop()
        return cls(ram, tuple(coeffs))

    def is_zero(self):
        return not self.coeffs or all(abs(c) < 1e-14 for c in self.coeffs)

    @property
    def degree(self):
        """Degree in 1/z as an exact rational; 0 for the zero part."""
        if self.is_zero():
            return Fraction(0)
        k = len(self.coeffs)
        while k > 0 and abs(self.coeffs[k - 1]) < 1e-14:
            k -= 1
        return Fraction(k, self.ram)

    @property
    def leading_coeff(self):
        if self.is_zero():
            return 0j
        return self.coeffs[-1]

    def rescaled(self, ram):
        """Re-express on a finer ramification grid."""
        if ram == self.ram:
            return self
        f = ram // self.ram
        if f * self.ram != ram:
            raise ValueError("ramification must refine")
        coeffs = [0j] * (len(self.coeffs) * f)
        for j, c in enumerate(self.coeffs, start=1):
            coeffs[j * f - 1] = c
        return ExponentialPart(ram, tuple(coeffs))

    def minus(self, other):
        a, b = self, other
        ram = a.ram * b.ram // math.gcd(a.ram, b.ram)
        a, b = a.rescaled(ram), b.rescaled(ram)
        n = max(len(a.coeffs), len(b.coeffs))
        coeffs = [0j] * n
        for j, c in enumerate(a.coeffs):
            coeffs[j] += c
        for j, c in enumerate(b.coeffs):
            coeffs[j] -= c
        return ExponentialPart(ram, tuple(coeffs))

    def eval(self, log_z):
        """q at exp(log_z); the branch of fractional powers follows log_z."""
        total = 0j
        for j, c in enumerate(self.coeffs, start=1):
            if c != 0:
                total += c * cmath.exp(-(j / self.ram) * log_z)
        return total

    def deriv_series(self, ram, upto):
        """dq/dz as a Laurent series in w = z**(1/ram)."""
        part = self.rescaled(ram)
        if part.is_zero():
            return LS.zero(upto)
        k = len(part.coeffs)
        c = np.zeros(k + ram, complex)
        # d/dz z^(-j/ram) = (-j/ram) z^(-j/ram - 1): w-exponent -j - ram
        for j, q in enumerate(part.coeffs, start=1):
            c[k + ram - j - ram] += q * (-j / ram)
        return LS(-k - ram, c, upto).trimmed()

    def close_to(self, other, tol=_Q_TOL):
        d = self.minus(other)
        scale = max(
            [abs(c) for c in self.coeffs] + [abs(c) for c in other.coeffs] + [1.0]
        )
        return all(abs(c) <= tol * scale for c in d.coeffs)

    def sort_key(self):
        """Canonical ordering: degree descending, then argument of the leading
        coefficient in [0, 2*pi), then lexicographic coefficients."""
        deg = self.degree
        lead = self.leading_coeff
        a = cmath.phase(lead) % (2 * math.pi) if lead != 0 else 0.0
        lex = tuple((round(c.real, 9), round(c.imag, 9)) for c in reversed(self.coeffs))
        return (-deg, round(a, 12), lex)

    def __repr__(self):
        if self.is_zero():
            return "q[0]"
        terms = [
            f"({c:.6g})z^(-{j}/{self.ram})"
            for j, c in enumerate(self.coeffs, start=1)
            if c != 0
        ]
        return "q[" + " + ".join(terms) + "]"


class SymbolSol:
    """One scalar symbol solution exp(q) w**beta sum_l xi^l/l! T_l(w).

    w = z**(1/ram), xi = log w.  tails has shape (depth+1, n) over exponents
    w**(beta + off + j).  good marks how many leading tail columns are
    trustworthy after truncation-eroding operations.
    """

    __slots__ = ("ram", "q", "beta", "off", "tails", "good")

    def __init__(self, ram, q, beta, off, tails, good=None):
        self.ram = ram
        self.q = q
        self.beta = complex(beta)
        self.off = int(off)
        self.tails = np.asarray(tails, complex)
        self.good = self.tails.shape[1] if good is None else int(good)

    @property
    def depth(self):
        return self.tails.shape[0] - 1

    def copy(self):
        return SymbolSol(self.ram, self.q, self.beta, self.off,
                         self.tails.copy(), self.good)

    def scalar_mul(self, a):
        return SymbolSol(self.ram, self.q, self.beta, self.off,
                         self.tails * a, self.good)

    def add(self, other):
        if other is None:
            return self
        assert self.ram == other.ram and abs(self.beta - other.beta) < 1e-9
        off = min(self.off, other.off)
        n = max(self.off + self.tails.shape[1], other.off + other.tails.shape[1]) - off
        depth = max(self.depth, other.depth)
        tails = np.zeros((depth + 1, n), complex)
        tails[: self.depth + 1, self.off - off : self.off - off + self.tails.shape[1]] += self.tails
        tails[: other.depth + 1, other.off - off : other.off - off + other.tails.shape[1]] += other.tails
        good = min(self.off + self.good, other.off + other.good) - off
        return SymbolSol(self.ram, self.q, self.beta, off, tails, good)

    def mul_ls(self, ls):
        """Multiply by a Laurent series in w."""
        if ls.c.size == 0:
            return SymbolSol(self.ram, self.q, self.beta, self.off,
                             np.zeros((self.depth + 1, 1), complex), 1)
        tails = np.apply_along_axis(lambda row: np.convolve(row, ls.c), 1, self.tails)
        good = min(self.good + ls.c.size - 1, ls.upto - ls.val + 1 + self.good - 1,
                   self.good, ls.upto - ls.val + 1)
        good = min(self.good, ls.upto - ls.val + 1)
        return SymbolSol(self.ram, self.q, self.beta, self.off + ls.val, tails, good)

    def dz(self):
        """Derivative d/dz = (w**(1-ram)/ram) d/dw applied to the symbol."""
        ram = self.ram
        depth, n = self.depth, self.tails.shape[1]
        qp = self.q.deriv_series(ram, 0)  # Laurent polynomial, exact
        # d/dw parts, before the (w^(1-ram)/ram) factor:
        pieces = []
        # (q'(z) dz/dw ... ) : work directly with d/dw = ram * w^(ram-1) * d/dz
        # Instead apply: d/dw [e^q w^b T] = e^q w^b [ (dq/dw + b/w) T + T' + xi-shift ]
        # dq/dw = dq/dz * dz/dw = qp * ram * w^(ram-1)
        if qp.c.size:
            dqdw = LS(qp.val + ram - 1, qp.c * ram, qp.upto + ram - 1)
            t1 = np.apply_along_axis(lambda row: np.convolve(row, dqdw.c), 1, self.tails)
            pieces.append((self.off + dqdw.val, t1))
        # (beta/w) T
        pieces.append((self.off - 1, self.tails * self.beta))
        # T'
        exps = self.off + np.arange(n)
        pieces.append((self.off - 1, self.tails * exps[None, :]))
        # xi-shift: slot l gets T_{l+1} / w
        if depth >= 1:
            shifted = np.zeros_like(self.tails)
            shifted[:-1] = self.tails[1:]
            pieces.append((self.off - 1, shifted))
        off = min(p[0] for p in pieces)
        width = max(p[0] + p[1].shape[1] for p in pieces) - off
        tails = np.zeros((depth + 1, width), complex)
        for o, t in pieces:
            tails[:, o - off : o - off + t.shape[1]] += t
        # multiply by w^(1-ram)/ram
        good = self.good - max(0, (qp.upto - qp.val) if qp.c.size else 0)
        good = self.good  # qp is exact (polynomial): no erosion beyond width
        return SymbolSol(ram, self.q, self.beta, off + 1 - ram, tails / ram, good)

    def xi_down(self):
        """The d/d(xi) image: tail families shift down one log level."""
        tails = np.zeros_like(self.tails)
        if self.depth >= 1:
            tails[:-1] = self.tails[1:]
        return SymbolSol(self.ram, self.q, self.beta, self.off, tails, self.good)

    def evaluate(self, log_z, terms=None):
        w = cmath.exp(log_z / self.ram)
        xi = log_z / self.ram
        n = self.tails.shape[1] if terms is None else min(terms, self.tails.shape[1])
        powers = w ** (np.arange(self.off, self.off + n))
        total = 0j
        for l in range(self.depth + 1):
            tl = np.dot(self.tails[l, :n], powers)
            total += tl * xi**l / math.factorial(l)
        return cmath.exp(self.q.eval(log_z)) * cmath.exp(self.beta * log_z / self.ram) * total


@dataclass
class FormalGroup:
    """Columns sharing one exponential part and one exponent chain."""

    cols: list
    q: ExponentialPart
    beta0: complex
    nilpotent: np.ndarray  # N_w, acting in w-log units
    resonant: bool


@dataclass
class FormalSolutionData:
    """The canonical triple (Hhat, L, Q) with levels, at one grid sample."""

    Hhat: list
    L: np.ndarray
    Q: list
    levels: list
    sample_index: int
    ram: int
    point: object
    groups: list
    columns: list = field(repr=False, default_factory=list)
    local_series: list = field(repr=False, default_factory=list)

    @property
    def m(self):
        return len(self.Hhat)


@dataclass
class MonodromyData:
    """Concrete monodromy matrix with its provenance."""

    matrix: np.ndarray
    kind: str  # "formal" | "numerical-loop"
    branch_note: str = "fractional powers follow log z continued from arg z = 0"


@dataclass
class UnramifiedForm:
    """Fundamental solution Phat z**C e(Q) with unramified Phat."""

    C: np.ndarray
    Phat: list
    residual: float


@dataclass
class ScalarReduction:
    """Order-m scalar operator equivalent to the system, with the gauge.

    gauge_inv maps the derivative stack (y, y', ..) back to system columns:
    Y = gauge_inv . (y, y', .., y^(m-1))^T.  None means the identity
    (companion input).  fallback_count reports how many random candidates the
    cyclic search consumed after the deterministic ladder.
    """

    op: DiffOp
    gauge: object
    gauge_inv: object
    kind: str
    fallback_count: int = 0


def _is_one(e):
    """Exact check that a UniRational equals 1."""
    return (
        e.num.size == e.den.size
        and e.num.size > 0
        and np.array_equal(e.num, e.den)
    )


def _is_companion(uni):
    m = len(uni)
    if m == 1:
        return True
    for i in range(m - 1):
        for j in range(m):
            e = uni[i][j]
            if j == i + 1:
                if not _is_one(e):
                    return False
            elif not e.is_zero():
                return False
    return True


def _is_diagonal(uni):
    m = len(uni)
    return all(
        uni[i][j].is_zero() for i in range(m) for j in range(m) if i != j
    )


def ls_solve(A, B):
    """Solve A X = B over Laurent series by elimination with valuation pivoting."""
    n = len(A)
    k = len(B[0])
    A = [row[:] for row in A]
    B = [row[:] for row in B]
    perm = list(range(n))
    for col in range(n):
        best, best_val = None, None
        for r in range(col, n):
            v = A[r][col].valuation()
            if v is not None and (best_val is None or v < best_val):
                best, best_val = r, v
        if best is None:
            raise SeriesError("series matrix is singular to working precision")
        A[col], A[best] = A[best], A[col]
        B[col], B[best] = B[best], B[col]
        inv = A[col][col].invert()
        A[col] = [inv * e for e in A[col]]
        B[col] = [inv * e for e in B[col]]
        for r in range(n):
            if r == col:
                continue
            f = A[r][col]
            if f.is_zero():
                continue
            A[r] = [a - f * b for a, b in zip(A[r], A[col])]
            B[r] = [a - f * b for a, b in zip(B[r], B[col])]
    return B


def to_scalar(system, sample_index, point=0.0, order=None, seed=0):
    """Cyclic-vector reduction of the local system to a scalar operator.

    Companion systems are detected exactly and bypass the search.  The
    deterministic candidate ladder tries the standard basis covectors and
    their partial sums before seeded random integer covectors.
    """
    m = system.m
    if m > 6:
        raise StokeslabError("cyclic-vector reduction is guarded to m <= 6")
    if order is None:
        order = 120
    uni = system.local_matrix(sample_index, point)
    margin = 4 * (m + 2)
    aser = system.local_matrix_series(sample_index, point, order + margin)

    if _is_companion(uni):
        # D^m y = sum_j A[m-1][j] D^j y  ->  D^m - sum A[m-1][j] D^j
        coeffs = [aser[m - 1][j].scalar(-1.0) for j in range(m)]
        coeffs.append(LS.const(1.0, aser[0][0].upto))
        return ScalarReduction(DiffOp(coeffs), None, None, "companion")

    rng = np.random.default_rng(seed)
    candidates = []
    for i in range(m):
        c = np.zeros(m, complex)
        c[i] = 1.0
        candidates.append(c)
    for i in range(2, m + 1):
        c = np.zeros(m, complex)
        c[:i] = 1.0
        candidates.append(c)
    fallback = 0
    n_random = 8
    for _ in range(n_random):
        candidates.append(rng.integers(-3, 4, size=m).astype(complex))

    upto = aser[0][0].upto
    for idx, cand in enumerate(candidates):
        if not np.any(cand):
            continue
        rows = [[LS.const(cand[j], upto) for j in range(m)]]
        for _ in range(m):
            prev = rows[-1]
            nxt = []
            for j in range(m):
                acc = prev[j].deriv()
                for k in range(m):
                    acc = acc + prev[k] * aser[k][j]
                nxt.append(acc)
            rows.append(nxt)
        G = rows[:m]
        try:
            # b solves b . G = rows[m]  <=>  G^T b^T = rows[m]^T
            GT = [[G[r][c] for r in range(m)] for c in range(m)]
            rhs = [[rows[m][c]] for c in range(m)]
            b = ls_solve(GT, rhs)
            ident = [
                [LS.const(1.0 if i == j else 0.0, upto) for j in range(m)]
                for i in range(m)
            ]
            ginv = ls_solve([row[:] for row in G], ident)
        except SeriesError:
            if idx >= 2 * m - 1:
                fallback += 1
            continue
        coeffs = [b[k][0].scalar(-1.0) for k in range(m)]
        coeffs.append(LS.const(1.0, min(c.upto for c in coeffs) if coeffs else upto))
        return ScalarReduction(DiffOp(coeffs), G, ginv, "cyclic", fallback)
    raise CyclicVectorError(len(candidates))


def newton_polygon(op):
    """Spec-shaped polygon: [(slope, horizontal length)], slopes ascending."""
    return [(s, k_hi - k_lo) for s, k_lo, k_hi in _op_newton_polygon(op)]


def exponential_parts(op, order=40):
    """The m exponential parts (with multiplicity) of a scalar operator."""
    branches = scalar_local_solutions(op, order)
    ram = 1
    for b in branches:
        ram = ram * b.ram // math.gcd(ram, b.ram)
    parts = []
    for b in branches:
        part = ExponentialPart.from_dict(b.ram, b.q).rescaled(ram)
        parts.extend([part] * b.size)
    parts.sort(key=lambda p: p.sort_key())
    return parts


def _diagonal_branches(aser, order):
    """Per-entry first-order solve for diagonal systems."""
    from .operators import FrobeniusChain

    m = len(aser)
    branches = []
    for i in range(m):
        a = aser[i][i]
        q = {}
        beta = a.coeff(-1)
        v = a.valuation()
        gp = np.zeros(order + 2, complex)  # integral of the analytic part
        if v is not None:
            for j in range(a.val, min(a.upto, order) + 1):
                c = a.coeff(j)
                if c == 0:
                    continue
                if j < -1:
                    q[j + 1] = q.get(j + 1, 0j) + c / (j + 1)
                elif j >= 0:
                    gp[j + 1] = c / (j + 1)
        # tail = exp(g): E_0 = 1, n E_n = sum_{j=1..n} j g_j E_{n-j}
        tail = np.zeros(order + 1, complex)
        tail[0] = 1.0
        for n in range(1, order + 1):
            acc = 0j
            for j in range(1, n + 1):
                if j < gp.size and gp[j] != 0:
                    acc += j * gp[j] * tail[n - j]
            tail[n] = acc / n
        chain = FrobeniusChain(beta0=beta, tails=tail[None, None, :], resonant=False)
        branches.append((i, ScalarBranch(ram=1, q=q, chain=chain)))
    return branches


def _branch_to_symbols(branch, ram):
    """Scalar SymbolSol for each chain member, on the common ramification."""
    f = ram // branch.ram
    q_part = ExponentialPart.from_dict(branch.ram, branch.q).rescaled(ram)
    beta0 = branch.chain.beta0 * f
    out = []
    for k in range(branch.size):
        t = branch.chain.tails[k]  # (depth+1, n)
        depth, n = t.shape[0] - 1, t.shape[1]
        tails = np.zeros((depth + 1, (n - 1) * f + 1), complex)
        for l in range(depth + 1):
            tails[l, ::f] = t[l] * (f ** l)
        out.append(SymbolSol(ram, q_part, beta0, 0, tails))
    return out


def _group_key(q, beta0):
    return q.sort_key() + (round(beta0.real, 9), round(beta0.imag, 9))


def formal_fundamental_solution(system, sample_index, point=0.0, order=80,
                                seed=0):
    """Compute the canonical (Hhat, L, Q) data at one singular point.

    order is the tail truncation in units of z**(1/ram).  Columns are grouped
    by exponential part and exponent chain; within a group the nilpotent of L
    is recovered from the log structure, and Hhat is normalized pole-free
    with per-group integer shifts.
    """
    m = system.m
    uni = system.local_matrix(sample_index, point)
    margin = 6 * (m + 2)
    aser = system.local_matrix_series(sample_index, point, order + margin)

    if _is_diagonal(uni) and m > 1:
        ram = 1
        sym_groups = []
        for i, branch in _diagonal_branches(aser, order):
            sym = _branch_to_symbols(branch, 1)[0]
            cols = [None] * m
            cols[i] = sym
            sym_groups.append(([cols], branch, sym.q, branch.chain.beta0))
    else:
        red = to_scalar(system, sample_index, point, order=order, seed=seed)
        branches = scalar_local_solutions(red.op, order)
        ram = 1
        for b in branches:
            ram = ram * b.ram // math.gcd(ram, b.ram)
        sym_groups = []
        for b in branches:
            syms = _branch_to_symbols(b, ram)
            group_cols = []
            for sym in syms:
                rows = [sym]
                for _ in range(m - 1):
                    rows.append(rows[-1].dz())
                if red.gauge_inv is None:
                    cols = rows
                else:
                    cols = []
                    for i in range(m):
                        acc = None
                        for k in range(m):
                            g = red.gauge_inv[i][k]
                            if g.is_zero():
                                continue
                            term = rows[k].mul_ls(g.rescale_exponents(ram))
                            acc = term if acc is None else acc.add(term)
                        if acc is None:
                            acc = SymbolSol(ram, sym.q, sym.beta, 0,
                                            np.zeros((sym.depth + 1, 1), complex))
                        cols.append(acc)
                group_cols.append(cols)
            sym_groups.append((group_cols, b, syms[0].q, syms[0].beta))

    # canonical ordering of groups
    sym_groups.sort(key=lambda g: _group_key(g[2], complex(g[3]) / ram))

    columns = []      # flat list of m-component symbol columns
    groups = []
    for group_cols, branch, q_part, _ in sym_groups:
        beta0 = None
        for cols in group_cols:
            for comp in cols:
                if comp is not None:
                    beta0 = comp.beta
                    break
            if beta0 is not None:
                break
        idx0 = len(columns)
        columns.extend(group_cols)
        depth = max(
            comp.depth for cols in group_cols for comp in cols if comp is not None
        )
        if depth > 0:
            nil = _solve_nilpotent(group_cols, m)
        else:
            nil = np.zeros((len(group_cols), len(group_cols)), complex)
        groups.append(
            FormalGroup(
                cols=list(range(idx0, idx0 + len(group_cols))),
                q=q_part,
                beta0=beta0,
                nilpotent=nil,
                resonant=branch.chain.resonant if hasattr(branch, "chain") else False,
            )
        )

    # normalization: per-group integer z-shift making Hhat pole-free with
    # leading block at exponent in [0, ram)
    L = np.zeros((m, m), complex)
    Q = []
    Hhat = [[None] * m for _ in range(m)]
    for g in groups:
        e_min = None
        for ci in g.cols:
            for comp in columns[ci]:
                if comp is None:
                    continue
                nz = np.nonzero(np.abs(comp.tails) > 0)[1]
                if nz.size:
                    e = comp.off + int(nz.min())
                    e_min = e if e_min is None else min(e_min, e)
        e_min = 0 if e_min is None else e_min
        kappa = -(e_min // ram)
        beta_adj = g.beta0 - kappa * ram
        for local_i, ci in enumerate(g.cols):
            Q.append(g.q)
            L[ci, ci] = beta_adj / ram
        for li, ci in enumerate(g.cols):
            for lj, cj in enumerate(g.cols):
                L[ci, cj] += g.nilpotent[li, lj] / ram
        g.beta0 = beta_adj
        for ci in g.cols:
            for i in range(m):
                comp = columns[ci][i]
                if comp is None:
                    Hhat[i][ci] = PuiseuxSeries.zero(ram, order)
                    continue
                row = comp.tails[0]
                lead = comp.off + kappa * ram
                ser = PuiseuxSeries.from_complex(
                    ram, lead, row[: comp.good], lead + comp.good - 1
                )
                Hhat[i][ci] = ser.truncate(order)

    # levels from pairwise differences of exponential parts
    lev = set()
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            d = Q[i].minus(Q[j])
            if not d.is_zero():
                lev.add(d.degree)
    levels = sorted(lev)

    return FormalSolutionData(
        Hhat=Hhat,
        L=L,
        Q=Q,
        levels=levels,
        sample_index=sample_index,
        ram=ram,
        point=point,
        groups=groups,
        columns=columns,
        local_series=aser,
    )


def _solve_nilpotent(group_cols, m):
    """N with d/d(xi) Y = Y N on the group's stacked tail tensors."""
    k = len(group_cols)
    feats = []
    targets = []
    off_min = min(
        comp.off for cols in group_cols for comp in cols if comp is not None
    )
    width = max(
        comp.off + comp.tails.shape[1]
        for cols in group_cols
        for comp in cols
        if comp is not None
    ) - off_min
    depth = max(
        comp.depth for cols in group_cols for comp in cols if comp is not None
    )

    def tensor(cols, shifted=False):
        T = np.zeros((m, depth + 1, width), complex)
        for i, comp in enumerate(cols):
            if comp is None:
                continue
            src = comp.xi_down() if shifted else comp
            o = src.off - off_min
            T[i, : src.depth + 1, o : o + src.tails.shape[1]] += src.tails
        return T.ravel()

    A = np.column_stack([tensor(cols) for cols in group_cols])
    N = np.zeros((k, k), complex)
    for j, cols in enumerate(group_cols):
        b = tensor(cols, shifted=True)
        sol, res, *_ = np.linalg.lstsq(A, b, rcond=None)
        N[:, j] = sol
        resid = np.linalg.norm(A @ sol - b)
        scale = np.linalg.norm(b) + 1.0
        if resid > 1e-6 * scale:
            raise StokeslabError(
                f"log-structure fit failed (residual {resid / scale:.2e})"
            )
    return N


def residual_ratio(data):
    """Shell-normalized residual of dH/dz + H(L/z + Q') - A H.

    Returns the maximum over entries and exponents of |residual| relative to
    the absolute-value convolution of the same products; values near 1e-16
    mean the recurrence is satisfied to rounding.
    """
    m = data.m
    ram = data.ram
    H = data.Hhat
    A = [[_ls_to_puiseux(data.local_series[i][j], ram) for j in range(m)]
         for i in range(m)]
    Labs = np.abs(data.L)
    qp = [
        _ls_to_puiseux(q.deriv_series(ram, 0), ram) for q in data.Q
    ]
    worst = 0.0
    for i in range(m):
        for j in range(m):
            r = H[i][j].differentiate()
            rabs = _abs_series(H[i][j]).differentiate()
            # + sum_k H[i,k] (L/z)[k,j]
            for k in range(m):
                if data.L[k, j] != 0:
                    term = H[i][k].scalar_mul(data.L[k, j]).shift(-ram)
                    r = r + term
                    rabs = rabs + _abs_series(H[i][k]).scalar_mul(Labs[k, j]).shift(-ram)
            r = r + H[i][j] * qp[j]
            rabs = rabs + _abs_series(H[i][j]) * _abs_series(qp[j])
            for k in range(m):
                term = A[i][k] * H[k][j]
                r = r - term
                rabs = rabs + _abs_series(A[i][k]) * _abs_series(H[k][j])
            worst = max(worst, _shell_ratio(r, rabs))
    return worst


def _ls_to_puiseux(ls, ram):
    if ls.c.size == 0:
        return PuiseuxSeries.zero(ram, ls.upto * ram)
    if ram == 1:
        return PuiseuxSeries.from_complex(1, ls.val, ls.c, ls.upto)
    c = np.zeros((ls.c.size - 1) * ram + 1, complex)
    c[::ram] = ls.c
    return PuiseuxSeries.from_complex(ram, ls.val * ram, c, ls.upto * ram)


def _abs_series(s):
    m = np.abs(s.mant)
    return PuiseuxSeries(s.ram, s.lead, m, s.exp10.copy(), s.order,
                         normalize=False)


def _shell_ratio(r, rabs):
    """max_n |r_n| / (tiny + scale_n), comparing on the overlap."""
    if r.is_zero():
        return 0.0
    lr = r.log10_abs()
    idx = np.arange(r.lead, r.order + 1)
    ls_ = rabs.log10_abs()
    idx_s = np.arange(rabs.lead, rabs.order + 1)
    smap = dict(zip(idx_s.tolist(), ls_.tolist()))
    worst = -np.inf
    hi = min(r.order, rabs.order) - 1  # final coefficient may be truncation debris
    for n, v in zip(idx.tolist(), lr.tolist()):
        if not np.isfinite(v) or n > hi:
            continue
        s = smap.get(n, -np.inf)
        base = max(s, 0.0)
        worst = max(worst, v - base)
    return 10.0 ** worst if np.isfinite(worst) else 0.0
