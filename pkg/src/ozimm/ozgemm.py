"""High-precision GEMM assembled from exact slice products.

The integer path splits A row-wise and B column-wise into int8 slices,
multiplies slice pairs (i, j) with i + j <= s + 1 exactly, and adds the
int32 products into an FP64 accumulator after scaling by the power of two
``e_A[r] * e_B[c] * 2**-((i + j) * w)``. Products on the same anti-diagonal
i + j = t share that scale and are summed as integers first; diagonals are
then added in ascending t. Scaling uses ``ldexp``, so each diagonal costs
exactly one rounding.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dd import dd_gemm, dd_zgemm
from .kernels import fp32_gemm, int_gemm
from .mmu import INT8_INT32, MmuSpec, bits_per_slice, gemm_count, get_mmu
from .split import (
    FP32_UNIT_ROUNDOFF,
    SliceSet,
    fp_slice_bits,
    loss_from_required,
    required_bits,
    row_exponents,
    split_fp,
    split_int,
)

AUTO = "auto"
DEFAULT_S_MAX = 18


class SplitCapWarning(RuntimeWarning):
    """AUTO hit s_max before the loss threshold was met."""


@dataclass(frozen=True)
class OzConfig:
    splits: Union[int, str] = 9
    mmu: MmuSpec = INT8_INT32
    threshold: float = 0.0
    path: str = "integer"
    s_max: int = DEFAULT_S_MAX

    def __post_init__(self):
        if self.path not in ("integer", "floating"):
            raise ValueError(f"path must be 'integer' or 'floating', not {self.path!r}")
        if self.splits == AUTO:
            if self.path != "integer":
                raise ValueError("AUTO split selection needs the integer path")
        elif not (isinstance(self.splits, (int, np.integer)) and self.splits >= 1):
            raise ValueError(f"splits must be a positive integer or 'auto', got {self.splits!r}")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.s_max < 1:
            raise ValueError("s_max must be >= 1")

    @property
    def auto(self) -> bool:
        return self.splits == AUTO


@dataclass
class GemmReport:
    splits_used: int
    gemm_calls: int
    slice_bytes: float
    shape: tuple[int, int, int]
    real_products: int = 1
    capped: bool = False
    mean_loss: Optional[float] = None
    max_loss: Optional[int] = None
    timing: dict = field(default_factory=lambda: {"split": 0.0, "slice_gemm": 0.0, "accumulate": 0.0})


def _check_operands(a, b, dtype) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=dtype)
    b = np.asarray(b, dtype=dtype)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("operands must be 2-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("operands contain non-finite entries")
    return a, b


class _AutoChoice:
    def __init__(self, splits, capped, mean_loss, max_loss):
        self.splits, self.capped = splits, capped
        self.mean_loss, self.max_loss = mean_loss, max_loss


def _choose_splits(parts: Sequence[np.ndarray], w: int, threshold: float, s_max: int) -> _AutoChoice:
    reqs = [required_bits(p, row_exponents(p)) for p in parts]
    for s in range(1, s_max + 1):
        stats = [loss_from_required(r, s * w) for r in reqs]
        worst = max(st.mean_bits for st in stats)
        if worst <= threshold:
            return _AutoChoice(s, False, worst, max(st.max_bits for st in stats))
    return _AutoChoice(s_max, True, worst, max(st.max_bits for st in stats))


def auto_splits(a, b, mmu: MmuSpec = INT8_INT32, threshold: float = 0.0,
                s_max: int = DEFAULT_S_MAX) -> int:
    """Smallest split count whose mean mantissa loss is at most ``threshold``.

    Both operands are inspected (B column-wise); complex operands count
    their real and imaginary parts separately. Emits SplitCapWarning and
    returns ``s_max`` when no count up to the cap is good enough.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    a, b = np.asarray(a), np.asarray(b)
    w = bits_per_slice(mmu, a.shape[1])
    choice = _choose_splits(_operand_parts(a, b), w, threshold, s_max)
    if choice.capped:
        warnings.warn(f"AUTO capped at s={s_max} (mean loss {choice.mean_loss:.3g} bits)",
                      SplitCapWarning, stacklevel=2)
    return choice.splits


def _operand_parts(a: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        a = a.astype(np.complex128, copy=False)
        b = b.astype(np.complex128, copy=False)
        return [a.real, a.imag, b.real.T, b.imag.T]
    return [np.asarray(a, np.float64), np.asarray(b, np.float64).T]


def _resolve_splits(parts, cfg: OzConfig, w: int) -> _AutoChoice:
    if not cfg.auto:
        return _AutoChoice(int(cfg.splits), False, None, None)
    choice = _choose_splits(parts, w, cfg.threshold, cfg.s_max)
    if choice.capped:
        warnings.warn(f"AUTO capped at s={cfg.s_max}", SplitCapWarning, stacklevel=3)
    return choice


def _diagonal(sa: SliceSet, sb: SliceSet, t: int, s: int, full: bool,
              report: GemmReport) -> np.ndarray:
    """Exact sum of the slice products with i + j = t, scaled to FP64.

    Every product on a diagonal shares the scale 2**-(t*w) * e_A * e_B^T,
    so they are added as integers first (at most s terms below 2**31 each,
    exact in int64) and rounded once when added to C.
    """
    t0 = time.perf_counter()
    acc = None
    for i, j in _diagonal_pairs(t, s, full):
        prod = int_gemm(sa.slices[i - 1], sb.slices[j - 1].T).astype(np.int64)
        acc = prod if acc is None else acc + prod
    t1 = time.perf_counter()
    scale = sa.exponents[:, None] + sb.exponents[None, :] - t * sa.width
    term = np.ldexp(acc.astype(np.float64), scale)
    report.timing["slice_gemm"] += t1 - t0
    report.timing["accumulate"] += time.perf_counter() - t1
    return term


def _diagonal_pairs(t: int, s: int, full: bool):
    limit = 2 * s if full else s + 1
    if t > limit:
        return
    for i in range(max(1, t - s), min(s, t - 1) + 1):
        yield i, t - i


def _diagonals(s: int, full: bool) -> range:
    return range(2, (2 * s if full else s + 1) + 1)


def _pairs(s: int):
    for i in range(1, s + 1):
        for j in range(1, s - i + 2):
            yield i, j


def oz_dgemm(a, b, cfg: OzConfig = OzConfig(), full: bool = False) -> tuple[np.ndarray, GemmReport]:
    """Real GEMM on the integer path. ``full`` keeps all s*s slice pairs."""
    if cfg.path == "floating":
        if cfg.auto:
            raise ValueError("AUTO is integer-path only")
        c = oz_dgemm_fp(a, b, int(cfg.splits))
        m, k = np.shape(a)
        s = int(cfg.splits)
        return c, GemmReport(s, gemm_count(s), 4.0 * s * (m + np.shape(b)[1]) * k, (m, np.shape(b)[1], k))
    a, b = _check_operands(a, b, np.float64)
    m, k = a.shape
    n = b.shape[1]
    w = bits_per_slice(cfg.mmu, k)
    t0 = time.perf_counter()
    bt = b.T
    choice = _resolve_splits([a, bt], cfg, w)
    s = choice.splits
    sa = split_int(a, s, cfg.mmu, k)
    sb = split_int(bt, s, cfg.mmu, k)
    report = GemmReport(s, s * s if full else gemm_count(s),
                        sa.nbytes(cfg.mmu.input_bytes) + sb.nbytes(cfg.mmu.input_bytes),
                        (m, n, k), capped=choice.capped,
                        mean_loss=choice.mean_loss, max_loss=choice.max_loss)
    report.timing["split"] = time.perf_counter() - t0
    c = np.zeros((m, n))
    for t in _diagonals(s, full):
        c += _diagonal(sa, sb, t, s, full, report)
    return c, report


def oz_zgemm(a, b, cfg: OzConfig = OzConfig()) -> tuple[np.ndarray, GemmReport]:
    """Complex GEMM from four real slice-product families.

    Real and imaginary parts are split separately, once each. For every
    pair (i, j) the four products are folded into the real and imaginary
    accumulators in a fixed order.
    """
    if cfg.path != "integer":
        raise ValueError("complex GEMM is implemented on the integer path")
    a, b = _check_operands(a, b, np.complex128)
    m, k = a.shape
    n = b.shape[1]
    w = bits_per_slice(cfg.mmu, k)
    t0 = time.perf_counter()
    parts = _operand_parts(a, b)
    choice = _resolve_splits(parts, cfg, w)
    s = choice.splits
    ar, ai, br, bi = (split_int(p, s, cfg.mmu, k) for p in parts)
    nbytes = sum(x.nbytes(cfg.mmu.input_bytes) for x in (ar, ai, br, bi))
    report = GemmReport(s, gemm_count(s), nbytes, (m, n, k), real_products=4,
                        capped=choice.capped, mean_loss=choice.mean_loss, max_loss=choice.max_loss)
    report.timing["split"] = time.perf_counter() - t0
    cr = np.zeros((m, n))
    ci = np.zeros((m, n))
    for t in _diagonals(s, False):
        cr += _diagonal(ar, br, t, s, False, report)
        cr -= _diagonal(ai, bi, t, s, False, report)
        ci += _diagonal(ar, bi, t, s, False, report)
        ci += _diagonal(ai, br, t, s, False, report)
    return cr + 1j * ci, report


def oz_dgemm_fp(a, b, s: int, u: float = FP32_UNIT_ROUNDOFF) -> np.ndarray:
    """Floating-point path: FP32 slice products summed in FP64.

    The last slice of each operand is the unbounded residual, so any pair
    involving it is multiplied in FP64; every other pair goes through the
    exact FP32 kernel.
    """
    a, b = _check_operands(a, b, np.float64)
    k = a.shape[1]
    if fp_slice_bits(k, u) < 1:
        raise ValueError(f"k={k} is too long for the FP32 path")
    sa = split_fp(a, s, k, u)
    sb = split_fp(b.T, s, k, u)
    c = np.zeros((a.shape[0], b.shape[1]))
    for i, j in _pairs(s):
        ai, bj = sa.slices[i - 1], sb.slices[j - 1].T
        if i < s and j < s:
            c += fp32_gemm(ai, bj)
        else:
            c += ai @ bj
    return c


class Fp64Backend:
    label = "fp64"

    def __init__(self):
        self.reports: list[GemmReport] = []

    def dgemm(self, a, b) -> np.ndarray:
        return np.asarray(a, np.float64) @ np.asarray(b, np.float64)

    def zgemm(self, a, b) -> np.ndarray:
        return np.asarray(a, np.complex128) @ np.asarray(b, np.complex128)


class DdBackend(Fp64Backend):
    label = "dd"

    def dgemm(self, a, b) -> np.ndarray:
        return dd_gemm(a, b).to_fp64()

    def zgemm(self, a, b) -> np.ndarray:
        return dd_zgemm(a, b).to_complex()


class OzakiBackend(Fp64Backend):
    """Drop-in dgemm/zgemm running the Ozaki scheme; keeps one report per call."""

    def __init__(self, cfg: OzConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.auto:
            self.label = f"auto:{cfg.threshold:g}"
        elif cfg.path == "floating":
            self.label = f"ozaki-fp:{cfg.splits}"
        else:
            self.label = f"ozaki:{cfg.splits}"

    def dgemm(self, a, b) -> np.ndarray:
        c, rep = oz_dgemm(a, b, self.cfg)
        self.reports.append(rep)
        return c

    def zgemm(self, a, b) -> np.ndarray:
        c, rep = oz_zgemm(a, b, self.cfg)
        self.reports.append(rep)
        return c


def gemm_backend(cfg: Union[OzConfig, str, None] = None, mmu: Optional[MmuSpec] = None):
    """Build a backend from an OzConfig or a label.

    Labels: "fp64", "dd", "ozaki:<s>", "ozaki-fp:<s>", "auto:<T>".
    """
    if isinstance(cfg, OzConfig):
        return OzakiBackend(cfg)
    label = (cfg or "fp64").strip().lower()
    mmu = mmu or INT8_INT32
    if label == "fp64":
        return Fp64Backend()
    if label == "dd":
        return DdBackend()
    kind, _, arg = label.partition(":")
    if kind == "ozaki" and arg:
        return OzakiBackend(OzConfig(splits=int(arg), mmu=mmu))
    if kind == "ozaki-fp" and arg:
        return OzakiBackend(OzConfig(splits=int(arg), mmu=mmu, path="floating"))
    if kind == "auto":
        return OzakiBackend(OzConfig(splits=AUTO, mmu=mmu, threshold=float(arg or 0)))
    raise ValueError(f"unknown backend {cfg!r}")


__all__ = [
    "AUTO", "OzConfig", "GemmReport", "SplitCapWarning", "auto_splits", "oz_dgemm", "oz_zgemm",
    "oz_dgemm_fp", "gemm_backend", "Fp64Backend", "DdBackend", "OzakiBackend", "get_mmu",
]
