"""Parameterized linear ODE systems and their singularity data.

A ParamSystem is a square matrix of ParamRational entries together with a
parameter grid.  Local analyses work in a local coordinate: w = z - a at a
finite point a, w = 1/z at infinity (where the system matrix picks up the
usual -w**-2 A(1/w) transform).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import ParameterGrid, UniRational, parse_rational_expr
from .operators import LS

INFINITY = "infinity"

_ROOT_CLUSTER_TOL = 1e-8


@dataclass(frozen=True)
class SingularPoint:
    """Location (complex or INFINITY) and pole order of the local matrix."""

    location: object
    pole_order: int

    @property
    def is_infinity(self):
        return self.location == INFINITY

    def __repr__(self):
        loc = "inf" if self.is_infinity else f"{self.location:.6g}"
        return f"SingularPoint({loc}, order {self.pole_order})"


class ParamSystem:
    """d/dz Y = A(z, t) Y with A a matrix of rational expressions."""

    def __init__(self, entries, grid):
        self.entries = [list(row) for row in entries]
        self.m = len(self.entries)
        for row in self.entries:
            if len(row) != self.m:
                raise ValueError("system matrix must be square")
        self.grid = grid

    @classmethod
    def from_strings(cls, rows, params, grid_samples, adjacency=None):
        params = tuple(params)
        entries = [[parse_rational_expr(s, params) for s in row] for row in rows]
        grid = ParameterGrid(params, grid_samples, adjacency or [])
        return cls(entries, grid)

    def sample(self, index):
        return self.grid.samples[index]

    def substitute(self, sample_index):
        """Matrix of univariate rationals in z at one parameter sample."""
        t = self.sample(sample_index)
        return [[e.substitute(t) for e in row] for row in self.entries]

    def eval_matrix(self, sample_index, z):
        t = self.sample(sample_index)
        out = np.zeros((self.m, self.m), dtype=complex)
        for i in range(self.m):
            for j in range(self.m):
                out[i, j] = self.entries[i][j].eval(t, z)
        return out

    def local_matrix(self, sample_index, point):
        """System matrix in the local coordinate at a point (or INFINITY).

        Finite a: B(w) = A(a + w).  Infinity: B(w) = -w**-2 A(1/w), the
        matrix of the system satisfied by Y(1/w).
        """
        uni = self.substitute(sample_index)
        out = []
        if point == INFINITY:
            for row in uni:
                new_row = []
                for e in row:
                    inv = e.invert_variable()
                    # -w^-2 * inv : multiply numerator by -1, denominator by w^2
                    new_row.append(
                        UniRational(-inv.num, np.convolve(inv.den, [0, 0, 1.0]))
                        if not inv.is_zero()
                        else UniRational.zero()
                    )
                out.append(new_row)
            return out
        a = complex(point)
        for row in uni:
            out.append([e.shift(a) for e in row])
        return out

    def local_matrix_series(self, sample_index, point, order):
        """Local matrix expanded as Laurent series (LS) through w**order."""
        loc = self.local_matrix(sample_index, point)
        out = []
        for row in loc:
            srow = []
            for e in row:
                val, coeffs = e.laurent(order)
                srow.append(LS(val, coeffs, order))
            out.append(srow)
        return out

    def singularities(self, sample_index, include_infinity=True):
        """Singular points of the local systems at one sample.

        A finite point is singular when some entry has a genuine pole there;
        infinity is singular when the transformed matrix has a pole at w = 0.
        """
        uni = self.substitute(sample_index)
        locations = []
        for row in uni:
            for e in row:
                if e.is_zero() or e.den.size <= 1:
                    continue
                roots = np.roots(e.den[::-1])
                for r in roots:
                    locations.append(complex(r))
        clusters = []
        for r in locations:
            for c in clusters:
                if abs(r - c[0]) <= _ROOT_CLUSTER_TOL * max(1.0, abs(r)):
                    c.append(r)
                    break
            else:
                clusters.append([r])
        points = []
        for c in clusters:
            loc = sum(c) / len(c)
            order = self._pole_order(uni, loc)
            if order > 0:
                points.append(SingularPoint(loc, order))
        points.sort(key=lambda p: (p.location.real, p.location.imag))
        if include_infinity:
            inf_order = self._infinity_pole_order(sample_index)
            if inf_order > 0:
                points.append(SingularPoint(INFINITY, inf_order))
        return points

    def _pole_order(self, uni, loc):
        order = 0
        for row in uni:
            for e in row:
                if e.is_zero():
                    continue
                shifted = e.shift(loc)
                nv = _fuzzy_valuation(shifted.num)
                dv = _fuzzy_valuation(shifted.den)
                order = max(order, dv - nv)
        return order

    def _infinity_pole_order(self, sample_index):
        loc = self.local_matrix(sample_index, INFINITY)
        order = 0
        for row in loc:
            for e in row:
                if e.is_zero():
                    continue
                nv = _fuzzy_valuation(e.num)
                dv = _fuzzy_valuation(e.den)
                order = max(order, dv - nv)
        return order


def _fuzzy_valuation(coeffs, rtol=1e-9):
    if coeffs.size == 0:
        return 0
    mx = np.max(np.abs(coeffs))
    if mx == 0.0:
        return 0
    nz = np.nonzero(np.abs(coeffs) > rtol * mx)[0]
    return int(nz[0]) if nz.size else 0
