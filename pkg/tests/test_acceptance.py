"""End-to-end acceptance criteria, each at its stated size and tolerance.

Every test prints its checks in the "acceptance criteria" section of the
pytest summary with a PASS/FAIL verdict per criterion.
"""

import csv
import io
import time
from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from ozimm.cli import run
from ozimm.datagen import gen_inverse_pair, gen_phi_matrix
from ozimm.dd import dd_gemm, relative_error_stats
from ozimm.kernels import fp32_gemm, int_gemm, overflow_budget
from ozimm.mmu import FP16_FP32, INT8_INT32, gemm_count, slice_bits, sweep
from ozimm.ozgemm import OzConfig, gemm_backend, oz_dgemm
from ozimm.qcsim import CircuitSpec, run_brickwork
from ozimm.split import mantissa_loss, reconstruct, required_bits, row_exponents, split_fp, split_int

pytestmark = pytest.mark.acceptance
GOLDEN = Path(__file__).parent / "golden"


def test_1_exactness_core(criterion):
    c = criterion(1, "int_gemm equals a big-integer oracle; blocked equals naive (1000 pairs, 64x64)")
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    mismatches = blocked_mismatches = 0
    for _ in range(1000):
        w = int(rng.integers(1, 8))
        assert overflow_budget(w, 64).safe
        hi = 2 ** w
        a = rng.integers(-hi + 1, hi, (64, 64)).astype(np.int8)
        b = rng.integers(-hi + 1, hi, (64, 64)).astype(np.int8)
        oracle = a.astype(object) @ b.astype(object)  # Python integers
        got = int_gemm(a, b)
        mismatches += not (got.astype(object) == oracle).all()
        tile = int(rng.choice([4, 8, 16, 32, 48]))
        blocked_mismatches += not np.array_equal(int_gemm(a, b, "blocked", tile=tile), int_gemm(a, b, "naive"))
    elapsed = time.perf_counter() - t0
    c.check(mismatches == 0, f"int_gemm vs big-integer oracle: {mismatches}/1000 mismatches")
    c.check(blocked_mismatches == 0, f"blocked vs naive schedule: {blocked_mismatches}/1000 mismatches")
    c.check(elapsed < 30, f"runtime {elapsed:.1f} s < 30 s")


def test_2_error_free_slice_products(criterion):
    c = criterion(2, "fp32_gemm of split_fp slices equals the DD reference exactly (200 matrices, k <= 256)")
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    pairs = inexact = 0
    for t in range(200):
        k = int(rng.integers(1, 257))
        m, n = (int(x) for x in rng.integers(1, 25, 2))
        s = int(rng.integers(2, 6))
        phi = float(rng.choice([0.1, 1.0, 2.0, 4.0]))
        a = gen_phi_matrix(m, k, phi, seed=t, stream=0)
        b = gen_phi_matrix(k, n, phi, seed=t, stream=1)
        sa, sb = split_fp(a, s, k), split_fp(b.T, s, k)
        # the last slice is the unbounded residual; every other pair must be error-free
        for i in range(s - 1):
            for j in range(s - 1):
                x, y = sa.slices[i], sb.slices[j].T
                got = fp32_gemm(x, y)
                ref = dd_gemm(x, y)
                pairs += 1
                inexact += not (np.array_equal(got, ref.hi) and not ref.lo.any())
    elapsed = time.perf_counter() - t0
    c.note(f"{pairs} slice pairs checked")
    c.check(inexact == 0, f"pairs with nonzero error vs DD: {inexact}")
    c.check(elapsed < 60, f"runtime {elapsed:.1f} s < 60 s")


def _full_significand_matrix(rng, rows, cols, spread):
    # every entry has a 53-bit significand, so valid length is exactly 53
    sig = (2 ** 52 + rng.integers(0, 2 ** 51, (rows, cols)) * 2 + 1).astype(np.float64)
    exps = rng.integers(-spread, 1, (rows, cols)) - 52
    sign = rng.choice([-1.0, 1.0], (rows, cols))
    return sign * np.ldexp(sig, exps)


def test_3_reconstruction(criterion):
    c = criterion(3, "split_int/reconstruct lossless iff offset + 53 <= s*w; mantissa_loss agrees (500 instances)")
    rng = np.random.default_rng(3)
    covered = lossy_flagged = bad_lossless = bad_loss = 0
    for _ in range(500):
        rows, cols = int(rng.integers(1, 9)), int(rng.integers(1, 33))
        spread, s = int(rng.integers(0, 9)), int(rng.integers(6, 13))
        m = _full_significand_matrix(rng, rows, cols, spread)
        ss = split_int(m, s, INT8_INT32, cols)
        offset = (row_exponents(m)[:, None] - np.floor(np.log2(np.abs(m))).astype(np.int64))
        cond = (offset + 53 <= s * ss.width).all()
        loss = mantissa_loss(m, s, INT8_INT32, cols)
        if cond:
            covered += 1
            bad_lossless += not np.array_equal(reconstruct(ss), m)
        else:
            lossy_flagged += loss.max_bits > 0
        bad_loss += cond != (loss.max_bits == 0)
        assert (required_bits(m, row_exponents(m)) == offset + 53).all()
    c.note(f"{covered} instances meet the condition, {500 - covered} do not")
    c.check(covered > 50 and covered < 450, "both sides of the condition are exercised")
    c.check(bad_lossless == 0, f"instances meeting the condition that did not round-trip bitwise: {bad_lossless}")
    c.check(bad_loss == 0, f"instances where (mantissa_loss == 0) disagrees with the condition: {bad_loss}")


def test_4_alpha_sanity(criterion):
    c = criterion(4, "slice_bits(FP16-FP32, 4096) = 6 and gemm_count(9) = 45")
    c.check(slice_bits(FP16_FP32, 4096) == 6, f"slice_bits(FP16-FP32, 4096) = {slice_bits(FP16_FP32, 4096)}")
    c.check(gemm_count(9) == 45, f"gemm_count(9) = {gemm_count(9)}")


def test_5_planner_ordering(criterion, tmp_path):
    c = criterion(5, "INT8 memory and GEMM count below FP16 over k in [2^11, 2^20]; golden CSV")
    t0 = time.perf_counter()
    ks = [2 ** p for p in range(11, 21)]
    rows = {(r.mmu, r.k): r for r in sweep([INT8_INT32, FP16_FP32], ks, 70)}
    mem_ok = all(rows["INT8-INT32", k].bytes_per_element < rows["FP16-FP32", k].bytes_per_element for k in ks)
    ops_ok = all(rows["INT8-INT32", k].gemm_ops <= rows["FP16-FP32", k].gemm_ops for k in ks)
    i8, f16 = rows["INT8-INT32", 4096], rows["FP16-FP32", 4096]
    out = tmp_path / "plan.csv"
    code = run(["plan", "--mmu", "int8,fp16", "--k-min", "2^11", "--k-max", "2^20", "--target-bits", "70",
                "--out", str(out)])
    elapsed = time.perf_counter() - t0
    c.check(mem_ok, "INT8 bytes/element < FP16 bytes/element for every k")
    c.check(i8.bytes_per_element == 10 and f16.bytes_per_element == 24
            and i8.bytes_per_element <= 0.5 * f16.bytes_per_element,
            f"k = 2^12: {i8.bytes_per_element} B vs {f16.bytes_per_element} B per element")
    c.check(ops_ok, "INT8 gemm_ops <= FP16 gemm_ops for every k")
    c.check(code == 0 and out.read_text() == (GOLDEN / "plan_int8_fp16_t70.csv").read_text(),
            "CLI sweep matches the committed golden CSV")
    c.check(elapsed < 1, f"runtime {elapsed:.2f} s < 1 s")


def test_6_phi_sweep(criterion):
    c = criterion(6, "phi sweep at 512^3: s=9 beats FP64 at phi=0.1, loses at phi=4; s=13 within 1.5x FP64 at phi=4")
    t0 = time.perf_counter()
    err = {}
    with threadpool_limits(limits=1):
        for phi in (0.1, 4.0):
            a = gen_phi_matrix(512, 512, phi, seed=0, stream=0)
            b = gen_phi_matrix(512, 512, phi, seed=0, stream=1)
            ref = dd_gemm(a, b)
            err[phi, "fp64"] = relative_error_stats(a @ b, ref).mean
            for s in ((9,) if phi == 0.1 else (9, 13)):
                err[phi, s] = relative_error_stats(oz_dgemm(a, b, OzConfig(splits=s))[0], ref).mean
    elapsed = time.perf_counter() - t0
    for key, val in err.items():
        c.note(f"phi={key[0]:g} {key[1]}: mean rel. error {val:.3e}")
    c.check(err[0.1, 9] < err[0.1, "fp64"], "(a) phi=0.1: s=9 error < FP64 error")
    c.check(err[4.0, 9] > err[4.0, "fp64"], "(b) phi=4: s=9 error > FP64 error")
    c.check(err[4.0, 13] <= 1.5 * err[4.0, "fp64"], "(c) phi=4: s=13 error <= 1.5x FP64 error")
    c.check(elapsed < 600, f"runtime {elapsed:.0f} s < 600 s (single-threaded)")


def test_7_inverse_pair(criterion):
    c = criterion(7, "A times its approximate inverse, n=512: s=11 error < FP64 error")
    t0 = time.perf_counter()
    a, a_dag = gen_inverse_pair(512, seed=0)
    ref = dd_gemm(a, a_dag)
    fp = relative_error_stats(a @ a_dag, ref).mean
    oz = relative_error_stats(oz_dgemm(a, a_dag, OzConfig(splits=11))[0], ref).mean
    elapsed = time.perf_counter() - t0
    c.note(f"FP64 mean rel. error {fp:.3e}, s=11 mean rel. error {oz:.3e}")
    c.check(oz < fp, "s=11 error < FP64 error")
    c.check(elapsed < 300, f"runtime {elapsed:.0f} s < 300 s")


QC_SEEDS = range(8)


def test_8_quantum_simulation(criterion):
    c = criterion(8, "brickwork N=16, d=4, L=8: AUTO(T=0) error <= 2x FP64; T=1 uses less memory and fewer splits")
    t0 = time.perf_counter()
    errs = {"fp64": [], "auto:0": []}
    mem_ok = fewer_ok = True
    for seed in QC_SEEDS:
        spec = CircuitSpec(16, 4, 8, seed=seed)
        ref, _ = run_brickwork(spec, gemm_backend("dd"))
        _, fp = run_brickwork(spec, gemm_backend("fp64"), reference=ref)
        _, t0r = run_brickwork(spec, gemm_backend("auto:0"), reference=ref)
        _, t1r = run_brickwork(spec, gemm_backend("auto:1"), reference=ref)
        errs["fp64"].append(fp.rel_error)
        errs["auto:0"].append(t0r.rel_error)
        mem_ok &= t1r.peak_slice_bytes < t0r.peak_slice_bytes
        fewer_ok &= any(x < y for x, y in zip(t1r.splits, t0r.splits))
        c.note(f"seed {seed}: fp64 {fp.rel_error:.3e}  auto:0 {t0r.rel_error:.3e} "
               f"splits T=0 {t0r.splits_histogram()} T=1 {t1r.splits_histogram()} "
               f"peak bytes {t0r.peak_slice_bytes:.0f} vs {t1r.peak_slice_bytes:.0f}")
    elapsed = time.perf_counter() - t0
    mean_fp, mean_auto = np.mean(errs["fp64"]), np.mean(errs["auto:0"])
    c.check(mean_auto <= 2 * mean_fp,
            f"mean first-amplitude error over {len(QC_SEEDS)} circuits: auto:0 {mean_auto:.3e} <= 2 x fp64 {mean_fp:.3e}")
    c.check(mem_ok, "AUTO(T=1) peak slice memory < AUTO(T=0) on every circuit")
    c.check(fewer_ok, "AUTO(T=1) uses strictly fewer splits than T=0 on at least one gate of every circuit")
    c.check(elapsed < 600, f"runtime {elapsed:.0f} s < 600 s")


DETERMINISM_RUNS = {
    "plan": ["plan", "--mmu", "int8,fp16,int4,int12", "--k-min", "2^11", "--k-max", "2^20"],
    "accuracy": ["accuracy", "--m", "96", "--n", "80", "--k", "128", "--phi", "0.1,1,2,4", "--splits", "9,11,13",
                 "--methods", "ozaki-int,ozaki-fp", "--seed", "4"],
    "invpair": ["invpair", "--n", "128", "--splits", "9,11,13", "--seed", "2"],
    "qcsim": ["qcsim", "--qubits", "12", "--gate-qubits", "4", "--layers", "4",
              "--backend", "fp64,dd,auto:0,auto:1,ozaki:10", "--seed", "1"],
    "bench": ["bench", "--sizes", "64,96", "--splits", "5,9"],
}
TIMING_COLUMNS = {"seconds", "effective_gflops"}


def _strip_timing(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    return [{k: v for k, v in r.items() if k not in TIMING_COLUMNS} for r in rows]


def test_9_determinism(criterion, tmp_path):
    c = criterion(9, "every CLI command rerun from its manifest gives bitwise-identical CSV at --threads 1 and 8")
    for name, argv in DETERMINISM_RUNS.items():
        first = tmp_path / f"{name}_t1.csv"
        assert run(argv + ["--threads", "1", "--out", str(first)]) == 0
        manifest = str(first) + ".manifest.json"
        outs = {}
        for threads in (1, 8):
            out = tmp_path / f"{name}_rerun_t{threads}.csv"
            assert run(["rerun", manifest, "--threads", str(threads), "--out", str(out)]) == 0
            outs[threads] = out.read_text()
        base = first.read_text()
        if name == "bench":
            same = _strip_timing(base) == _strip_timing(outs[1]) == _strip_timing(outs[8])
            c.check(same, "bench: identical apart from wall-clock columns (seconds, effective_gflops)")
        else:
            c.check(base == outs[1] == outs[8], f"{name}: identical bytes ({len(base)} B)")
