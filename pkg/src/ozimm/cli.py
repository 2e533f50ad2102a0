"""Command-line front end: ``ozimm {plan,accuracy,invpair,qcsim,bench,rerun}``.

Every command writes a CSV (``--out`` or stdout) and a JSON run manifest
(``--manifest``, default ``<out>.manifest.json``, or stderr when writing
to stdout). ``ozimm rerun MANIFEST`` replays a manifest.

Exit codes: 0 ok, 2 usage, 3 infeasible configuration, 4 resource cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .datagen import gen_inverse_pair, gen_phi_matrix
from .dd import dd_gemm, relative_error_stats
from .mmu import PLAN_COLUMNS, InfeasibleError, gemm_count, get_mmu, plan_csv_rows, sweep
from .ozgemm import OzConfig, gemm_backend, oz_dgemm, oz_dgemm_fp
from .ozmm import read_ozmm, write_ozmm
from .qcsim import CircuitSpec, run_brickwork

EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_RESOURCE = 4
DEFAULT_MEM_CAP = 4 * 2 ** 30


class UsageError(Exception):
    pass


class ResourceCapError(Exception):
    pass


def _fmt(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "nan"
    return f"{x:.9e}"


def parse_int(text: str) -> int:
    text = text.strip()
    try:
        if "^" in text:
            base, exp = text.split("^")
            return int(base) ** int(exp)
        if "**" in text:
            base, exp = text.split("**")
            return int(base) ** int(exp)
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _list(conv: Callable):
    def parse(text: str):
        try:
            return [conv(t) for t in text.split(",") if t.strip()]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _write_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _pow2_range(lo: int, hi: int) -> list[int]:
    for v in (lo, hi):
        if v < 1 or v & (v - 1):
            raise UsageError(f"{v} is not a power of two")
    if lo > hi:
        raise UsageError("--k-min exceeds --k-max")
    out, k = [], lo
    while k <= hi:
        out.append(k)
        k *= 2
    return out


def cmd_plan(args) -> str:
    if not args.mmu:
        raise UsageError("--mmu is required")
    try:
        mmus = [get_mmu(name) for name in args.mmu]
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    if args.target_bits < 1:
        raise UsageError("--target-bits must be positive")
    ks = _pow2_range(args.k_min, args.k_max)
    return _write_csv(PLAN_COLUMNS, plan_csv_rows(sweep(mmus, ks, args.target_bits)))


def _phi_operands(args, phi):
    if args.load:
        d = Path(args.load)
        return read_ozmm(d / f"A_phi{phi:g}.ozmm"), read_ozmm(d / f"B_phi{phi:g}.ozmm")
    a = gen_phi_matrix(args.m, args.k, phi, args.seed, 0)
    b = gen_phi_matrix(args.k, args.n, phi, args.seed, 1)
    return a, b


def cmd_accuracy(args) -> str:
    mmu = get_mmu(args.mmu)
    rows = []
    for phi in args.phi:
        a, b = _phi_operands(args, phi)
        if args.dump:
            Path(args.dump).mkdir(parents=True, exist_ok=True)
            write_ozmm(Path(args.dump) / f"A_phi{phi:g}.ozmm", a)
            write_ozmm(Path(args.dump) / f"B_phi{phi:g}.ozmm", b)
        size = f"{a.shape[0]}x{b.shape[1]}x{a.shape[1]}"
        ref = dd_gemm(a, b)
        st = relative_error_stats(a @ b, ref)
        rows.append([size, f"{phi:g}", "fp64", "", _fmt(st.mean), _fmt(st.max)])
        for s in args.splits:
            for method in args.methods:
                try:
                    if method == "ozaki-int":
                        c, _ = oz_dgemm(a, b, OzConfig(splits=s, mmu=mmu))
                    else:
                        c = oz_dgemm_fp(a, b, s)
                    st = relative_error_stats(c, ref)
                    rows.append([size, f"{phi:g}", method, str(s), _fmt(st.mean), _fmt(st.max)])
                except (InfeasibleError, ValueError) as exc:
                    print(f"warning: {method} s={s} infeasible: {exc}", file=sys.stderr)
                    rows.append([size, f"{phi:g}", method, str(s), "nan", "nan"])
    return _write_csv(("size", "phi", "method", "splits", "mean_rel_err", "max_rel_err"), rows)


def cmd_invpair(args) -> str:
    mmu = get_mmu(args.mmu)
    a, a_dag = gen_inverse_pair(args.n, args.seed)
    ref = dd_gemm(a, a_dag)
    rows = []
    st = relative_error_stats(a @ a_dag, ref)
    rows.append([str(args.n), "fp64", "", _fmt(st.mean), _fmt(st.max), str(st.zero_ref)])
    for s in args.splits:
        c, _ = oz_dgemm(a, a_dag, OzConfig(splits=s, mmu=mmu))
        st = relative_error_stats(c, ref)
        rows.append([str(args.n), "ozaki-int", str(s), _fmt(st.mean), _fmt(st.max), str(st.zero_ref)])
    return _write_csv(("n", "method", "splits", "mean_rel_err", "max_rel_err", "zero_ref"), rows)


def qcsim_required_bytes(n: int, d: int, s_max: int = 18) -> int:
    """State, gathered matrix and result, plus worst-case int8 slices."""
    amps = 2 ** n
    return 3 * 16 * amps + 2 * s_max * amps + 2 * s_max * 4 ** d


# stand-ins for the two circuit configurations: small and large gate width
QCSIM_PRESETS = {"small": (16, 2, 8), "large": (16, 4, 8)}


def cmd_qcsim(args) -> str:
    if args.preset:
        args.qubits, args.gate_qubits, args.layers = QCSIM_PRESETS[args.preset]
    try:
        spec = CircuitSpec(args.qubits, args.gate_qubits, args.layers, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    need = qcsim_required_bytes(args.qubits, args.gate_qubits)
    if need > args.mem_cap:
        raise ResourceCapError(f"simulation needs ~{need} bytes, cap is {args.mem_cap} bytes")
    mmu = get_mmu(args.mmu)
    backends = []
    for label in args.backend:
        try:
            backends.append(gemm_backend(label, mmu=mmu))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    ref_state, _ = run_brickwork(spec, gemm_backend("dd"))
    rows = []
    m, n, k = 2 ** (args.qubits - args.gate_qubits), 2 ** args.gate_qubits, 2 ** args.gate_qubits
    for backend in backends:
        state, rep = run_brickwork(spec, backend, reference=ref_state)
        if args.dump:
            Path(args.dump).mkdir(parents=True, exist_ok=True)
            write_ozmm(Path(args.dump) / f"state_{backend.label.replace(':', '_')}.ozmm", state.amplitudes)
        hist = ";".join(f"{s}:{c}" for s, c in rep.splits_histogram().items())
        rows.append([rep.backend, str(args.qubits), str(args.gate_qubits), str(args.layers),
                     str(len(rep.gemm_shapes)), repr(rep.amp0_real), _fmt(rep.rel_error), hist,
                     str(int(rep.peak_slice_bytes)), str(m), str(n), str(k)])
    header = ("backend", "qubits", "gate_qubits", "layers", "gates", "amp0_real", "rel_error",
              "splits_hist", "peak_slice_bytes", "gemm_m", "gemm_n", "gemm_k")
    return _write_csv(header, rows)


def cmd_bench(args) -> str:
    mmu = get_mmu(args.mmu)
    rows = []
    for size in args.sizes:
        a = gen_phi_matrix(size, size, args.phi, args.seed, 0)
        b = gen_phi_matrix(size, size, args.phi, args.seed, 1)
        runs = [("fp64", "", 1, lambda: a @ b)]
        for s in args.splits:
            cfg = OzConfig(splits=s, mmu=mmu)
            runs.append(("ozaki-int", str(s), gemm_count(s), lambda cfg=cfg: oz_dgemm(a, b, cfg)))
            runs.append(("ozaki-fp", str(s), gemm_count(s), lambda s=s: oz_dgemm_fp(a, b, s)))
        for method, splits, calls, fn in runs:
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                fn()
                best = min(best, time.perf_counter() - t0)
            gflops = 2.0 * size ** 3 / best / 1e9
            rows.append([str(size), method, splits, str(calls), f"{best:.6f}", f"{gflops:.4f}"])
    return _write_csv(("size", "method", "splits", "gemm_calls", "seconds", "effective_gflops"), rows)


COMMANDS = {
    "plan": cmd_plan,
    "accuracy": cmd_accuracy,
    "invpair": cmd_invpair,
    "qcsim": cmd_qcsim,
    "bench": cmd_bench,
}


def _default_threads() -> int:
    env = os.environ.get("OZIMM_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ozimm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mmu: bool = True):
        sp.add_argument("--out", help="CSV path (default stdout)")
        sp.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
        sp.add_argument("--threads", type=int, default=None,
                        help="BLAS threads (default $OZIMM_THREADS or all cores)")
        sp.add_argument("--seed", type=int, default=0)
        if mmu:
            sp.add_argument("--mmu", default="int8", help="MMU preset for Ozaki paths")
        return sp

    sp = common(sub.add_parser("plan", help="MMU design-space sweep"), mmu=False)
    sp.add_argument("--mmu", type=_list(str), help="comma list, e.g. int8,fp16")
    sp.add_argument("--k-min", type=parse_int, default=2 ** 11)
    sp.add_argument("--k-max", type=parse_int, default=2 ** 20)
    sp.add_argument("--target-bits", type=parse_int, default=70)

    sp = common(sub.add_parser("accuracy", help="error vs. exponent range"))
    sp.add_argument("--m", type=parse_int, default=512)
    sp.add_argument("--n", type=parse_int, default=512)
    sp.add_argument("--k", type=parse_int, default=512)
    sp.add_argument("--phi", type=_list(float), default=[0.1, 1.0, 2.0, 4.0])
    sp.add_argument("--splits", type=_list(parse_int), default=[9, 11, 13])
    sp.add_argument("--methods", type=_list(str), default=["ozaki-int"])
    sp.add_argument("--dump", help="directory for OZMM dumps of the inputs")
    sp.add_argument("--load", help="directory of A_phi<phi>.ozmm / B_phi<phi>.ozmm written by --dump")

    sp = common(sub.add_parser("invpair", help="error of A times its approximate inverse"))
    sp.add_argument("--n", type=parse_int, default=512)
    sp.add_argument("--splits", type=_list(parse_int), default=[9, 11, 13])

    sp = common(sub.add_parser("qcsim", help="brickwork random-circuit simulation"))
    sp.add_argument("--preset", choices=sorted(QCSIM_PRESETS),
                    help="named circuit; overrides --qubits/--gate-qubits/--layers")
    sp.add_argument("--qubits", type=int, default=16)
    sp.add_argument("--gate-qubits", type=int, default=4)
    sp.add_argument("--layers", type=int, default=8)
    sp.add_argument("--backend", type=_list(str), default=["fp64", "auto:0", "auto:1"])
    sp.add_argument("--mem-cap", type=parse_int, default=DEFAULT_MEM_CAP)
    sp.add_argument("--dump", help="directory for OZMM dumps of final states")

    sp = common(sub.add_parser("bench", help="wall-clock of FP64 vs Ozaki paths (CPU emulation)"))
    sp.add_argument("--sizes", type=_list(parse_int), default=[128, 256])
    sp.add_argument("--splits", type=_list(parse_int), default=[9])
    sp.add_argument("--phi", type=float, default=0.1)
    sp.add_argument("--repeat", type=int, default=1)

    sp = sub.add_parser("rerun", help="replay a run manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out")
    sp.add_argument("--manifest-out", dest="manifest_out")
    sp.add_argument("--threads", type=int, default=None)
    return p


_RUN_ONLY = {"out", "manifest", "threads", "command"}


def _params(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in _RUN_ONLY}


def _to_argv(command: str, params: dict) -> list[str]:
    argv = [command]
    for key, val in params.items():
        if val is None:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(val, list):
            val = ",".join(repr(v) if isinstance(v, float) else str(v) for v in val)
        elif isinstance(val, float):
            val = repr(val)
        argv += [flag, str(val)]
    return argv


def run(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "rerun":
        with open(args.manifest) as f:
            man = json.load(f)
        new = _to_argv(man["command"], man["params"])
        if args.out:
            new += ["--out", args.out]
        if args.manifest_out:
            new += ["--manifest", args.manifest_out]
        if args.threads:
            new += ["--threads", str(args.threads)]
        return run(new)
    threads = args.threads or _default_threads()
    t0 = time.perf_counter()
    try:
        with threadpool_limits(limits=threads):
            text = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ozimm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"ozimm {args.command}: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ResourceCapError as exc:
        print(f"ozimm {args.command}: refused: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    manifest = {
        "command": args.command,
        "params": _params(args),
        "seed": args.seed,
        "version": __version__,
        "threads": threads,
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }
    if args.out:
        Path(args.out).write_text(text, newline="")
    else:
        sys.stdout.write(text)
    man_path = args.manifest or (args.out + ".manifest.json" if args.out else None)
    man_text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    if man_path:
        Path(man_path).write_text(man_text)
    else:
        sys.stderr.write(man_text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
