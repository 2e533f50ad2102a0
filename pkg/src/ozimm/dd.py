"""Double-double arithmetic and the reference GEMM built on it.

All kernels are written against numpy arrays so the same code serves
scalars and whole matrices. Products use Dekker's splitting (no FMA is
assumed), which is exact for |x| below roughly 2**996.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1

# hi + lo can only be exact if lo stays a normal number
_PROD_UNDERFLOW = 2.0 ** -969
_SPLIT_OVERFLOW = 2.0 ** 996


def two_sum(a, b):
    """Knuth's branch-free TwoSum: s = fl(a+b), e = (a+b) - s exactly."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def quick_two_sum(a, b):
    """Requires |a| >= |b| (or a == 0)."""
    s = a + b
    e = b - (s - a)
    return s, e


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def dd_add_arrays(ahi, alo, bhi, blo):
    s, e = two_sum(ahi, bhi)
    t, f = two_sum(alo, blo)
    e = e + t
    s, e = quick_two_sum(s, e)
    e = e + f
    return quick_two_sum(s, e)


def dd_mul_arrays(ahi, alo, bhi, blo):
    p, e = two_prod(ahi, bhi)
    e = e + (ahi * blo + alo * bhi)
    return quick_two_sum(p, e)


@dataclass(frozen=True)
class DdValue:
    hi: float
    lo: float = 0.0

    @classmethod
    def of(cls, x: float) -> "DdValue":
        return cls(float(x), 0.0)

    def __float__(self) -> float:
        return float(self.hi + self.lo)

    def __add__(self, other: "DdValue") -> "DdValue":
        return dd_add(self, _as_dd(other))

    def __mul__(self, other: "DdValue") -> "DdValue":
        return dd_mul(self, _as_dd(other))

    def __neg__(self) -> "DdValue":
        return DdValue(-self.hi, -self.lo)

    def __sub__(self, other: "DdValue") -> "DdValue":
        return self + (-_as_dd(other))


def _as_dd(x) -> DdValue:
    return x if isinstance(x, DdValue) else DdValue.of(x)


def scalar_two_sum(a: float, b: float) -> DdValue:
    s, e = two_sum(float(a), float(b))
    if not np.isfinite(s):
        return DdValue(s, np.nan)
    return DdValue(s, e)


def scalar_two_prod(a: float, b: float) -> DdValue:
    """Exact product as hi + lo.

    Raises FloatingPointError when the exact product cannot be held as a
    pair of doubles (overflow, or an error term lost to underflow).
    """
    a, b = float(a), float(b)
    if a == 0.0 or b == 0.0:
        return DdValue(a * b, 0.0)
    p, e = two_prod(a, b)
    if not np.isfinite(p) or not np.isfinite(e) or max(abs(a), abs(b)) >= _SPLIT_OVERFLOW:
        raise FloatingPointError(f"product {a!r} * {b!r} overflows the double-double range")
    if abs(p) < _PROD_UNDERFLOW:
        raise FloatingPointError(f"product {a!r} * {b!r} underflows; error term not representable")
    return DdValue(p, e)


def dd_add(a: DdValue, b: DdValue) -> DdValue:
    hi, lo = dd_add_arrays(a.hi, a.lo, b.hi, b.lo)
    return DdValue(float(hi), float(lo))


def dd_mul(a: DdValue, b: DdValue) -> DdValue:
    hi, lo = dd_mul_arrays(a.hi, a.lo, b.hi, b.lo)
    return DdValue(float(hi), float(lo))


@dataclass(frozen=True)
class DdMatrix:
    hi: np.ndarray
    lo: np.ndarray

    @classmethod
    def from_fp64(cls, a) -> "DdMatrix":
        a = np.asarray(a, dtype=np.float64)
        return cls(a.copy(), np.zeros_like(a))

    @property
    def shape(self) -> tuple[int, int]:
        return self.hi.shape

    @property
    def rows(self) -> int:
        return self.hi.shape[0]

    @property
    def cols(self) -> int:
        return self.hi.shape[1]

    def to_fp64(self) -> np.ndarray:
        return self.hi + self.lo


@dataclass(frozen=True)
class DdCpxMatrix:
    re: DdMatrix
    im: DdMatrix

    @classmethod
    def from_complex(cls, a) -> "DdCpxMatrix":
        a = np.asarray(a, dtype=np.complex128)
        return cls(DdMatrix.from_fp64(a.real), DdMatrix.from_fp64(a.imag))

    @property
    def shape(self) -> tuple[int, int]:
        return self.re.shape

    def to_complex(self) -> np.ndarray:
        return self.re.to_fp64() + 1j * self.im.to_fp64()


def _check_gemm_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("dd_gemm expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")


def _dd_dot_terms(acc_hi, acc_lo, terms):
    """Accumulate exact products (a_col, b_row) into a DD accumulator."""
    for a_col, b_row in terms:
        p, e = two_prod(a_col, b_row)
        acc_hi, acc_lo = dd_add_arrays(acc_hi, acc_lo, p, e)
    return acc_hi, acc_lo


def dd_gemm(a, b) -> DdMatrix:
    """C = A @ B with every dot product accumulated in double-double.

    The inner index runs in ascending order for every output entry, so
    the result does not depend on blocking or thread count.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_gemm_shapes(a, b)
    m, k = a.shape
    n = b.shape[1]
    hi = np.zeros((m, n))
    lo = np.zeros((m, n))
    terms = ((a[:, j, None], b[None, j, :]) for j in range(k))
    hi, lo = _dd_dot_terms(hi, lo, terms)
    return DdMatrix(hi, lo)


def dd_zgemm(a, b) -> DdCpxMatrix:
    """Complex DD GEMM: Re = sum(ar*br - ai*bi), Im = sum(ar*bi + ai*br)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    _check_gemm_shapes(a, b)
    m, k = a.shape
    n = b.shape[1]
    ar, ai = np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)
    br, bi = np.ascontiguousarray(b.real), np.ascontiguousarray(b.imag)
    re_hi, re_lo = np.zeros((m, n)), np.zeros((m, n))
    im_hi, im_lo = np.zeros((m, n)), np.zeros((m, n))
    for j in range(k):
        re_hi, re_lo = _dd_dot_terms(re_hi, re_lo, [(ar[:, j, None], br[None, j, :]),
                                                    (-ai[:, j, None], bi[None, j, :])])
        im_hi, im_lo = _dd_dot_terms(im_hi, im_lo, [(ar[:, j, None], bi[None, j, :]),
                                                    (ai[:, j, None], br[None, j, :])])
    return DdCpxMatrix(DdMatrix(re_hi, re_lo), DdMatrix(im_hi, im_lo))


class ErrorStats(NamedTuple):
    mean: float
    max: float
    count: int
    zero_ref: int


def _diff_from_dd(c: np.ndarray, ref: DdMatrix) -> np.ndarray:
    return (c - ref.hi) - ref.lo


def relative_error_stats(c, ref: Union[DdMatrix, DdCpxMatrix]) -> ErrorStats:
    """Mean and max of |C - C_ref| / |C_ref| over entries with nonzero reference.

    Entries whose reference is exactly zero are skipped and counted in
    ``zero_ref``.
    """
    c = np.asarray(c)
    if isinstance(ref, DdCpxMatrix):
        if c.shape != ref.shape:
            raise ValueError(f"shape mismatch {c.shape} vs {ref.shape}")
        c = c.astype(np.complex128, copy=False)
        num = np.hypot(_diff_from_dd(c.real, ref.re), _diff_from_dd(c.imag, ref.im))
        den = np.hypot(ref.re.to_fp64(), ref.im.to_fp64())
    else:
        if np.iscomplexobj(c):
            raise TypeError("complex result needs a DdCpxMatrix reference")
        if c.shape != ref.shape:
            raise ValueError(f"shape mismatch {c.shape} vs {ref.shape}")
        num = np.abs(_diff_from_dd(c.astype(np.float64, copy=False), ref))
        den = np.abs(ref.to_fp64())
    nz = den != 0
    zero_ref = int(np.count_nonzero(~nz))
    if not nz.any():
        return ErrorStats(0.0, 0.0, 0, zero_ref)
    rel = num[nz] / den[nz]
    return ErrorStats(float(rel.mean()), float(rel.max()), int(rel.size), zero_ref)
