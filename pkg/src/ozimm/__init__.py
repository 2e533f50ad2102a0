"""FP64 and complex GEMM from exact int8/int32 slice products (Ozaki scheme)."""

from .dd import DdCpxMatrix, DdMatrix, DdValue, dd_gemm, dd_zgemm, relative_error_stats
from .mmu import (
    FP16_FP32,
    INT4_INT32,
    INT8_INT32,
    INT12_INT32,
    InfeasibleError,
    MmuSpec,
    bits_per_slice,
    gemm_count,
    get_mmu,
    memory_per_element,
    slice_bits,
    splits_for_space,
    sweep,
)
from .ozgemm import AUTO, GemmReport, OzConfig, auto_splits, gemm_backend, oz_dgemm, oz_dgemm_fp, oz_zgemm
from .split import mantissa_loss, reconstruct, split_fp, split_int, valid_mantissa_length

__version__ = "0.1.0"
