"""Mantissa-space splitting of FP64 matrices.

Two paths are provided:

* :func:`split_int` lays each row out in a shared mantissa space anchored
  at a power-of-two row scale and cuts it into ``s`` integer slices of
  ``w`` bits (block-float form, sign-magnitude, truncating).
* :func:`split_fp` is the floating-point extraction loop that peels off
  high parts with the ``(x + sigma) - sigma`` trick, leaving slices whose
  pairwise dot products are exact in FP32.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dd import quick_two_sum, two_sum
from .mmu import InfeasibleError, MmuSpec, bits_per_slice, ceil_log2, slice_bits

FP32_UNIT_ROUNDOFF = 2.0 ** -24


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("matrix contains non-finite entries")
    return m


def exponent(x) -> np.ndarray:
    """floor(log2|x|) for nonzero x (0 is mapped to 0)."""
    _, e = np.frexp(x)
    return np.where(x == 0, 0, e.astype(np.int64) - 1)


def _significand(x) -> np.ndarray:
    frac, _ = np.frexp(np.abs(x))
    return np.ldexp(frac, 53).astype(np.int64)


def valid_mantissa_length(x):
    """Bits from the leading 1 to the last 1 of the significand (0 for zero).

    Works elementwise on arrays; returns a Python int for scalars.
    """
    n = _significand(np.asarray(x, dtype=np.float64))
    low = n & -n
    _, tz1 = np.frexp(low.astype(np.float64))
    vl = np.where(n == 0, 0, 54 - tz1.astype(np.int64))
    return int(vl) if vl.ndim == 0 else vl


def lowest_bit_exponent(x) -> np.ndarray:
    """Exponent of the least significant set bit of each nonzero x."""
    x = np.asarray(x, dtype=np.float64)
    return exponent(x) - (valid_mantissa_length(x) - 1)


@dataclass(frozen=True)
class SliceSet:
    """Integer slices of an m x k matrix with one power-of-two scale per row.

    ``slices[p]`` holds bits ``p*w .. (p+1)*w - 1`` (0-based p) of
    ``|M| / 2**exponents[i]`` with the sign of M. Rows flagged in
    ``zero_rows`` have scale zero.
    """

    s: int
    width: int
    alpha: int
    slices: np.ndarray  # int8, (s, rows, cols)
    exponents: np.ndarray  # int64, (rows,)
    zero_rows: np.ndarray  # bool, (rows,)

    @property
    def rows(self) -> int:
        return self.slices.shape[1]

    @property
    def cols(self) -> int:
        return self.slices.shape[2]

    @property
    def row_exp(self) -> np.ndarray:
        """The row scales e_i as doubles (0 for all-zero rows)."""
        e = np.ldexp(1.0, self.exponents)
        return np.where(self.zero_rows, 0.0, e)

    def nbytes(self, input_bytes) -> float:
        """Slice storage at ``input_bytes`` per element (row scales excluded)."""
        return float(self.s * self.rows * self.cols * input_bytes)


def split_int(m, s: int, mmu: MmuSpec, k_eff: int) -> SliceSet:
    """Split M (A, or B transposed) into ``s`` integer slices.

    The slice width is ``min(alpha, l_in)`` for accumulation length ``k_eff``.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    m = _as_matrix(m)
    w = bits_per_slice(mmu, k_eff)
    if w > 7:
        raise InfeasibleError(f"slice width {w} does not fit int8 storage")
    absm = np.abs(m)
    rowmax = absm.max(axis=1) if m.shape[1] else np.zeros(m.shape[0])
    _, e = np.frexp(rowmax)
    e = e.astype(np.int64)
    zero_rows = rowmax == 0
    e[zero_rows] = 0
    sign = np.where(m < 0, -1.0, 1.0)
    slices = np.empty((s,) + m.shape, dtype=np.int8)
    base = float(2 ** w)
    for p in range(1, s + 1):
        # exact: ldexp only moves the exponent, and |M|/e < 1 bounds the value
        t = np.ldexp(absm, (p * w - e)[:, None])
        digit = np.fmod(np.floor(t), base)
        slices[p - 1] = (sign * digit).astype(np.int8)
    if s and slices.size and int(np.abs(slices.astype(np.int16)).max()) >= 2 ** w:
        raise AssertionError("slice entry exceeds its bit width")
    return SliceSet(s, w, slice_bits(mmu, k_eff), slices, e, zero_rows)


def reconstruct(ss: SliceSet) -> np.ndarray:
    """Sum the slices back into FP64, accumulating in double-double."""
    hi = np.zeros((ss.rows, ss.cols))
    lo = np.zeros((ss.rows, ss.cols))
    for p in range(1, ss.s + 1):
        term = np.ldexp(ss.slices[p - 1].astype(np.float64), (ss.exponents - p * ss.width)[:, None])
        hi, err = two_sum(hi, term)
        lo = lo + err
        hi, lo = quick_two_sum(hi, lo)
    out = hi + lo
    out[ss.zero_rows] = 0.0
    return out


def required_bits(m, row_exponents: np.ndarray) -> np.ndarray:
    """Per-element mantissa-space length needed to hold the element exactly.

    This is ``offset + valid_len`` where the offset counts positions from
    the row scale down to the element's leading bit. Zeros give 0.
    """
    offset = row_exponents[:, None] - exponent(m)
    vl = valid_mantissa_length(m)
    return np.where(m == 0, 0, offset + vl)


def row_exponents(m: np.ndarray) -> np.ndarray:
    absm = np.abs(m)
    rowmax = absm.max(axis=1) if m.shape[1] else np.zeros(m.shape[0])
    _, e = np.frexp(rowmax)
    return e.astype(np.int64)


class LossStats(NamedTuple):
    mean_bits: float
    max_bits: int


def loss_from_required(req: np.ndarray, space: int) -> LossStats:
    nz = req > 0
    if not nz.any():
        return LossStats(0.0, 0)
    loss = np.maximum(req[nz] - space, 0)
    return LossStats(float(loss.mean()), int(loss.max()))


def mantissa_loss(m, s: int, mmu: MmuSpec, k_eff: int) -> LossStats:
    """Bits of each nonzero element that fall outside ``s * w`` positions."""
    m = _as_matrix(m)
    w = bits_per_slice(mmu, k_eff)
    return loss_from_required(required_bits(m, row_exponents(m)), s * w)


@dataclass(frozen=True)
class FpSliceSet:
    s: int
    bits: int  # leading bits kept per slice (all but the last)
    beta: int  # exponent shift used for the sigma constant
    slices: np.ndarray  # float64, (s, rows, cols)

    @property
    def rows(self) -> int:
        return self.slices.shape[1]

    @property
    def cols(self) -> int:
        return self.slices.shape[2]


def fp_slice_bits(k_eff: int, u: float = FP32_UNIT_ROUNDOFF) -> int:
    """Bits per slice so that length-k dot products stay exact at roundoff u."""
    if u != FP32_UNIT_ROUNDOFF:
        raise NotImplementedError("only FP32 working precision (u = 2**-24) is supported")
    return (24 - ceil_log2(k_eff)) // 2


def split_fp(m, s: int, k_eff: int, u: float = FP32_UNIT_ROUNDOFF) -> FpSliceSet:
    """Error-free extraction into ``s`` FP64 slices; the last is the residual.

    The extraction runs in FP64, so the sigma shift is ``53 - bits`` where
    ``bits`` is the per-slice budget for the FP32 working precision.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    m = _as_matrix(m)
    bits = fp_slice_bits(k_eff, u)
    if bits < 1:
        raise ValueError(f"k={k_eff} is too long for exact FP32 accumulation")
    beta = 53 - bits
    r = m.copy()
    out = np.empty((s,) + m.shape)
    for p in range(s - 1):
        mx = np.abs(r).max(axis=1) if m.shape[1] else np.zeros(m.shape[0])
        frac, e = np.frexp(mx)
        tau = np.where(frac == 0.5, e - 1, e)  # ceil(log2 mx)
        sigma = np.where(mx != 0, np.ldexp(0.75, tau + beta), 0.0)[:, None]
        if not np.isfinite(sigma).all():
            raise OverflowError("row maximum too large for the extraction constant")
        out[p] = (r + sigma) - sigma
        r = r - out[p]
    out[s - 1] = r
    return FpSliceSet(s, bits, beta, out)
