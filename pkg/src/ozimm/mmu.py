"""Design-space formulas for matrix-multiplication units.

Everything here is closed-form: slice widths, split counts, working memory
and slice-GEMM counts for an MMU described by its input/accumulator
mantissa widths.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

DEFAULT_TARGET_BITS = 70


class InfeasibleError(ValueError):
    """Exact accumulation is impossible for this (mmu, k) pair."""


@dataclass(frozen=True)
class MmuSpec:
    name: str
    l_in: int
    l_acc: int
    input_bytes: Fraction

    def __post_init__(self):
        object.__setattr__(self, "input_bytes", Fraction(self.input_bytes))
        if self.l_in <= 0 or self.l_acc <= 0:
            raise ValueError("mantissa lengths must be positive")
        if self.l_in > self.l_acc:
            raise ValueError(f"{self.name}: l_in={self.l_in} exceeds l_acc={self.l_acc}")
        if self.input_bytes * 8 < self.l_in:
            raise ValueError(f"{self.name}: {self.input_bytes} bytes cannot hold {self.l_in} bits")


FP16_FP32 = MmuSpec("FP16-FP32", 11, 24, Fraction(2))
INT4_INT32 = MmuSpec("INT4-INT32", 3, 31, Fraction(1, 2))
INT8_INT32 = MmuSpec("INT8-INT32", 7, 31, Fraction(1))
INT12_INT32 = MmuSpec("INT12-INT32", 11, 31, Fraction(3, 2))

PRESETS = {m.name: m for m in (FP16_FP32, INT4_INT32, INT8_INT32, INT12_INT32)}
ALIASES = {"fp16": FP16_FP32, "int4": INT4_INT32, "int8": INT8_INT32, "int12": INT12_INT32}


def get_mmu(name: str) -> MmuSpec:
    """Look up a preset by full name ("INT8-INT32") or short alias ("int8")."""
    if name in PRESETS:
        return PRESETS[name]
    try:
        return ALIASES[name.lower()]
    except KeyError:
        known = ", ".join(list(ALIASES) + list(PRESETS))
        raise KeyError(f"unknown MMU {name!r}; known: {known}") from None


def ceil_log2(k: int) -> int:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return (k - 1).bit_length()


def slice_bits(mmu: MmuSpec, k: int) -> int:
    """Mantissa bits per slice that keep a length-k dot product exact.

    May be zero or negative; callers that need a usable width go through
    :func:`bits_per_slice`.
    """
    return (mmu.l_acc - ceil_log2(k)) // 2


def bits_per_slice(mmu: MmuSpec, k: int) -> int:
    alpha = slice_bits(mmu, k)
    if alpha <= 0:
        raise InfeasibleError(f"{mmu.name} cannot accumulate k={k} exactly (alpha={alpha})")
    return min(alpha, mmu.l_in)


def splits_for_space(mmu: MmuSpec, k: int, target_bits: int = DEFAULT_TARGET_BITS) -> int:
    if target_bits <= 0:
        raise ValueError("target_bits must be positive")
    bps = bits_per_slice(mmu, k)
    return -(-target_bits // bps)


def memory_per_element(mmu: MmuSpec, k: int, target_bits: int = DEFAULT_TARGET_BITS) -> Fraction:
    return splits_for_space(mmu, k, target_bits) * mmu.input_bytes


def gemm_count(s: int) -> int:
    """Slice-pair products with i + j <= s + 1."""
    if s < 1:
        raise ValueError("s must be >= 1")
    return s * (s + 1) // 2


@dataclass(frozen=True)
class PlanRow:
    mmu: str
    k: int
    alpha: int
    bps: Optional[int]
    splits: Optional[int]
    bytes_per_element: Optional[Fraction]
    gemm_ops: Optional[int]

    @property
    def feasible(self) -> bool:
        return self.bps is not None


def plan_row(mmu: MmuSpec, k: int, target_bits: int = DEFAULT_TARGET_BITS) -> PlanRow:
    alpha = slice_bits(mmu, k)
    if alpha <= 0:
        return PlanRow(mmu.name, k, alpha, None, None, None, None)
    s = splits_for_space(mmu, k, target_bits)
    return PlanRow(mmu.name, k, alpha, min(alpha, mmu.l_in), s, s * mmu.input_bytes, gemm_count(s))


def sweep(mmus: Iterable[MmuSpec], k_values: Iterable[int],
          target_bits: int = DEFAULT_TARGET_BITS) -> list[PlanRow]:
    """One row per (mmu, k), sorted by MMU name then k. Infeasible pairs are kept."""
    mmus = sorted(set(mmus), key=lambda m: m.name)
    ks = sorted(set(int(k) for k in k_values))
    return [plan_row(m, k, target_bits) for m in mmus for k in ks]


PLAN_COLUMNS = ("mmu", "k", "alpha", "bps", "splits", "bytes_per_element", "gemm_ops", "feasible")


def format_bytes(b: Optional[Fraction]) -> str:
    if b is None:
        return ""
    return str(b.numerator) if b.denominator == 1 else format(float(b), "g")


def plan_csv_rows(rows: Iterable[PlanRow]) -> list[list[str]]:
    out = []
    for r in rows:
        opt = lambda v: "" if v is None else str(v)  # noqa: E731
        out.append([r.mmu, str(r.k), str(r.alpha), opt(r.bps), opt(r.splits),
                    format_bytes(r.bytes_per_element), opt(r.gemm_ops),
                    "1" if r.feasible else "0"])
    return out
