"""Exact low-precision GEMM kernels.

``int_gemm`` emulates an INT8-input / INT32-accumulate unit. Its default
schedule runs through FP64 BLAS: every partial sum is an integer below
2**31, so the double-precision result is the exact integer no matter how
the library blocks or threads the reduction.

``fp32_gemm`` runs a genuine FP32 GEMM on operands prepared so that no
rounding can occur, and checks that precondition before computing.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .dd import dd_gemm
from .split import exponent, lowest_bit_exponent

INT32_MAX = 2 ** 31 - 1
INT8_MAX = 127


class OverflowBudgetError(ValueError):
    """The accumulation could exceed the 32-bit accumulator."""


class RepresentabilityError(ValueError):
    """An FP32 GEMM on these operands could round."""


class Budget(NamedTuple):
    bound: int
    safe: bool


def overflow_budget(w: int, k: int) -> Budget:
    """Worst-case |dot product| for w-bit magnitudes over length k."""
    if w < 1:
        raise ValueError("w must be >= 1")
    bound = k * (2 ** w - 1) ** 2
    return Budget(bound, bound <= INT32_MAX)


def _check_int_operand(x, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D")
    if not np.issubdtype(x.dtype, np.integer):
        raise TypeError(f"{name} must hold integers, got {x.dtype}")
    if x.size and int(np.abs(x.astype(np.int64)).max()) > INT8_MAX:
        raise ValueError(f"{name} has entries outside the int8 range")
    return x


def _naive(a, b):
    return np.matmul(a.astype(np.int64), b.astype(np.int64))


def _blocked(a, b, tile: int):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.int32)
    a32, b32 = a.astype(np.int32), b.astype(np.int32)
    for i0 in range(0, m, tile):
        for j0 in range(0, n, tile):
            acc = np.zeros((min(tile, m - i0), min(tile, n - j0)), dtype=np.int32)
            for p0 in range(0, k, tile):
                acc += a32[i0:i0 + tile, p0:p0 + tile] @ b32[p0:p0 + tile, j0:j0 + tile]
            out[i0:i0 + tile, j0:j0 + tile] = acc
    return out


def int_gemm(a, b, schedule: str = "blas", tile: int = 32, check: bool = False) -> np.ndarray:
    """Exact product of int8 slice matrices with int32 results.

    ``schedule`` picks "blas" (FP64 BLAS, exact), "naive" (int64 matmul)
    or "blocked" (tiled int32 accumulation). All three agree bitwise.
    With ``check`` the result is shadowed by a 64-bit product.
    """
    a = _check_int_operand(a, "A")
    b = _check_int_operand(b, "B")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    k = a.shape[1]
    amax = int(np.abs(a.astype(np.int64)).max()) if a.size else 0
    bmax = int(np.abs(b.astype(np.int64)).max()) if b.size else 0
    if k * amax * bmax > INT32_MAX:
        raise OverflowBudgetError(f"k={k} with max|A|={amax}, max|B|={bmax} may overflow int32")
    if schedule == "blas":
        c = (a.astype(np.float64) @ b.astype(np.float64)).astype(np.int32)
    elif schedule == "naive":
        c = _naive(a, b).astype(np.int32)
    elif schedule == "blocked":
        c = _blocked(a, b, tile)
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    if check and not np.array_equal(c.astype(np.int64), _naive(a, b)):
        raise AssertionError("int32 accumulation diverged from the 64-bit shadow")
    return c


def _grain(x: np.ndarray, axis: int) -> np.ndarray:
    """Smallest bit exponent present along rows (axis=1) or columns (axis=0)."""
    low = np.where(x != 0, lowest_bit_exponent(x), np.iinfo(np.int64).max)
    g = low.min(axis=axis) if x.size else np.zeros(x.shape[1 - axis], dtype=np.int64)
    return np.where(g == np.iinfo(np.int64).max, 0, g)


def _scale_exponents(x: np.ndarray, axis: int) -> np.ndarray:
    mx = np.abs(x).max(axis=axis) if x.size else np.zeros(x.shape[1 - axis])
    return np.where(mx == 0, 0, exponent(mx) + 1)


def fp32_gemm(a, b, verify: bool = False) -> np.ndarray:
    """A @ B computed in FP32 with a guarantee of no rounding.

    Rows of A and columns of B are first normalised by powers of two so
    the FP32 exponent range is never the limiting factor. The operation is
    refused unless every entry fits a 24-bit significand and every partial
    sum is provably an FP32 number.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"incompatible shapes {a.shape} x {b.shape}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("non-finite operand")
    ea = _scale_exponents(a, 1)
    eb = _scale_exponents(b, 0)
    an = np.ldexp(a, -ea[:, None])
    bn = np.ldexp(b, -eb[None, :])
    if not (np.array_equal(np.ldexp(an, ea[:, None]), a)
            and np.array_equal(np.ldexp(bn, eb[None, :]), b)):
        raise RepresentabilityError("operand spans too wide an exponent range")
    a32, b32 = an.astype(np.float32), bn.astype(np.float32)
    if not (np.array_equal(a32, an) and np.array_equal(b32, bn)):
        raise RepresentabilityError("operand entries are not exact FP32 values")
    # all partial sums are multiples of 2**(ga+gb) bounded by |A| @ |B|
    ga = _grain(an, 1)
    gb = _grain(bn, 0)
    bound = np.abs(an) @ np.abs(bn) * (1 + 2.0 ** -40)
    limit = np.ldexp(1.0, ga[:, None] + gb[None, :] + 24)
    if (bound > limit).any() or ((ga[:, None] + gb[None, :] < -149) & (bound > 0)).any():
        raise RepresentabilityError("partial sums may exceed the FP32 significand")
    c = np.ldexp((a32 @ b32).astype(np.float64), ea[:, None] + eb[None, :])
    if verify:
        ref = dd_gemm(a, b)
        if not (np.array_equal(ref.hi, c) and not ref.lo.any()):
            raise AssertionError("FP32 product differs from the double-double reference")
    return c
