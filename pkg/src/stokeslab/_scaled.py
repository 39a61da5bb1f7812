"""Scaled complex coefficient arrays: mantissa plus decimal exponent.

Series coefficients of divergent expansions grow like n!^k and overflow
complex128 around n = 170.  A coefficient c is stored as (m, e) with
c = m * 10**e, |m| in [1, 10) for nonzero entries, m = 0, e = 0 for zeros.
All helpers below operate on aligned ndarray pairs.
"""

from __future__ import annotations

import numpy as np

# mantissas stay representable while intermediate products of two
# normalized mantissas are exact in double precision
_ZERO_EXP = 0

# raw complex128 is safe while |exponent| stays below this; used by fast paths
SAFE_EXP10 = 140


def normalize(mant, exp10):
    """Renormalize so nonzero mantissas have magnitude in [1, 10)."""
    mant = np.asarray(mant, dtype=complex).copy()
    exp10 = np.asarray(exp10, dtype=np.int64).copy()
    absm = np.abs(mant)
    nz = absm > 0.0
    if np.any(nz):
        shift = np.zeros_like(exp10)
        shift[nz] = np.floor(np.log10(absm[nz])).astype(np.int64)
        mant[nz] = mant[nz] * 10.0 ** (-shift[nz].astype(float))
        exp10[nz] += shift[nz]
    mant[~nz] = 0.0
    exp10[~nz] = _ZERO_EXP
    return mant, exp10


def from_complex(values):
    values = np.asarray(values, dtype=complex)
    finite = np.isfinite(values.real) & np.isfinite(values.imag)
    if not np.all(finite):
        raise OverflowError("non-finite coefficient cannot be scaled")
    return normalize(values, np.zeros(values.shape, dtype=np.int64))


def to_complex(mant, exp10):
    """Collapse to complex128; overflows go to inf, underflows to 0."""
    with np.errstate(over="ignore", under="ignore"):
        return mant * 10.0 ** exp10.astype(float)


def log10_abs(mant, exp10):
    """log10|c| per entry, -inf for zeros."""
    absm = np.abs(mant)
    out = np.full(absm.shape, -np.inf)
    nz = absm > 0.0
    out[nz] = np.log10(absm[nz]) + exp10[nz].astype(float)
    return out


def is_safe(exp10):
    """True when the block can round-trip through complex128 products."""
    return exp10.size == 0 or int(np.max(np.abs(exp10))) < SAFE_EXP10


def add(m1, e1, m2, e2):
    """Entrywise sum of two aligned scaled arrays."""
    e = np.maximum(e1, e2)
    d1 = (e1 - e).astype(float)
    d2 = (e2 - e).astype(float)
    # differences <= 0; 10**d underflows harmlessly to 0 for huge gaps
    with np.errstate(under="ignore"):
        m = m1 * 10.0 ** d1 + m2 * 10.0 ** d2
    return normalize(m, e)


def mul(m1, e1, m2, e2):
    return normalize(m1 * m2, e1 + e2)


def scale(m, e, factor):
    """Multiply by a plain complex scalar."""
    if factor == 0:
        return np.zeros_like(m), np.zeros_like(e)
    fm, fe = from_complex(np.array([factor]))
    return normalize(m * fm[0], e + fe[0])


def shift_log10(m, e, log10_factors):
    """Multiply entry n by 10**log10_factors[n] (real log magnitudes).

    Used for Gamma-ratio ladders: the factor's fractional part goes into the
    mantissa, the integer part into the exponent, so no raw Gamma value is
    ever formed.
    """
    log10_factors = np.asarray(log10_factors, dtype=float)
    ip = np.floor(log10_factors).astype(np.int64)
    frac = log10_factors - ip
    return normalize(m * 10.0 ** frac, e + ip)


def conv(m1, e1, m2, e2):
    """Full linear convolution of two scaled coefficient vectors."""
    n1, n2 = len(m1), len(m2)
    if n1 == 0 or n2 == 0:
        return np.zeros(0, dtype=complex), np.zeros(0, dtype=np.int64)
    out_m = np.zeros(n1 + n2 - 1, dtype=complex)
    out_e = np.zeros(n1 + n2 - 1, dtype=np.int64)
    for k in range(n1 + n2 - 1):
        lo = max(0, k - n2 + 1)
        hi = min(n1 - 1, k)
        idx = np.arange(lo, hi + 1)
        tm = m1[idx] * m2[k - idx]
        te = e1[idx] + e2[k - idx]
        nz = np.abs(tm) > 0.0
        if not np.any(nz):
            continue
        tm, te = tm[nz], te[nz]
        emax = int(np.max(te))
        with np.errstate(under="ignore"):
            s = np.sum(tm * 10.0 ** (te - emax).astype(float))
        out_m[k] = s
        out_e[k] = emax
    return normalize(out_m, out_e)
