"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

import numpy as np

from . import analysis, lzs
from .affine import Int8Tensor, QuantParams, compute_params_int8, dequantize_int8, quantize_int8
from .errors import FormatError, ValidationError
from .qgemm import quantize_weights, quartz_gemm, reference_gemm
from .tensor import DISTRIBUTIONS, Tensor, read_tensor, sample_distribution, write_tensor

DEFAULT_GROUP_SIZE = 16


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--in", dest="inp", type=Path, help="QTNSR input; otherwise samples are drawn")
    p.add_argument("--dist", choices=DISTRIBUTIONS, default="gaussian")
    p.add_argument("--param", type=float, default=1.0, help="sigma / b / half-width")
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, help="required when sampling")
    p.add_argument("--range", dest="calib", type=float,
                   help="fix the calibration interval to [-RANGE, RANGE] instead of min/max")
    p.add_argument("--int4-scale", choices=analysis.INT4_SCALES, default="minmax")
    p.add_argument("--shift-round", choices=lzs.SHIFT_MODES, default="trunc")


def _add_report_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help="report path (stdout if omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quartz-lzs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="QTNSR -> QPACK (INT8 then LZS)")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--group-size", type=int, default=DEFAULT_GROUP_SIZE)
    p.add_argument("--shift-round", choices=lzs.SHIFT_MODES, default="trunc")
    p.add_argument("--range", dest="calib", type=float)

    p = sub.add_parser("dequantize", help="QPACK -> QTNSR")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("matmul", help="packed activations x 4-bit weights")
    p.add_argument("--a", type=Path, required=True, help="QPACK activations (M x K)")
    p.add_argument("--w", type=Path, required=True, help="QTNSR float weights (K x N)")
    p.add_argument("--wgroup", type=int, help="weight group size along K (default: activation group size)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--check", action="store_true", help="also run the float oracle and report the max difference")

    p = sub.add_parser("analyze", help="bound/distortion report for one group size")
    _add_source(p)
    p.add_argument("--group-size", type=int, default=DEFAULT_GROUP_SIZE)
    _add_report_out(p)

    p = sub.add_parser("sweep", help="one report per group size")
    _add_source(p)
    p.add_argument("--sizes", type=int, nargs="+", default=list(analysis.DEFAULT_SWEEP_SIZES))
    _add_report_out(p)

    p = sub.add_parser("entropy", help="LZS-packed vs naive INT4 code entropy")
    _add_source(p)
    p.add_argument("--group-size", type=int, default=DEFAULT_GROUP_SIZE)
    p.add_argument("--entropy-mode", choices=analysis.ENTROPY_MODES, default="symbol")
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("sample", help="write a seeded 1 x n sample as QTNSR")
    p.add_argument("--dist", choices=DISTRIBUTIONS, default="gaussian")
    p.add_argument("--param", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rows", type=int, default=1, help="reshape the sample to ROWS x n/ROWS")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)

    sub.add_parser("selftest", help="exhaustive codec and FLAG-equivalence checks")
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _load_source(args):
    if args.inp is not None:
        return read_tensor(args.inp), {"distribution": str(args.inp)}
    if args.seed is None:
        raise ValidationError("--seed is required when sampling (no hidden entropy)")
    x = sample_distribution(args.dist, args.param, args.n, args.seed)
    return x, {"distribution": args.dist, "param": args.param, "seed": args.seed}


def _calib(args):
    return None if args.calib is None else (-args.calib, args.calib)


def _report_kwargs(args, meta: dict) -> dict:
    return dict(x_range=_calib(args), int4_scale=args.int4_scale, shift_round=args.shift_round, **meta)


def _write_reports(reports, args) -> None:
    text = analysis.reports_to_csv(reports) if args.format == "csv" else analysis.reports_to_json(reports)
    _emit(text, args.out)


def cmd_quantize(args) -> int:
    x = read_tensor(args.inp)
    q = quantize_int8(x, compute_params_int8(x, x_range=_calib(args)))
    lzs.write_packed(lzs.lzs_compress(q, args.group_size, args.shift_round), args.out)
    return 0


def cmd_dequantize(args) -> int:
    write_tensor(dequantize_int8(lzs.lzs_decompress(lzs.read_packed(args.inp))), args.out)
    return 0


def cmd_matmul(args) -> int:
    a = lzs.read_packed(args.a)
    w = quantize_weights(read_tensor(args.w), args.wgroup or a.group_size)
    y = quartz_gemm(a, w)
    if args.check:
        ref = reference_gemm(a, w)
        diff = float(np.max(np.abs(y.data.astype(np.float64) - ref.data))) if y.size else 0.0
        print(f"max |quartz - reference| = {diff!r}", file=sys.stderr)
    write_tensor(y, args.out)
    return 0


def cmd_analyze(args) -> int:
    x, meta = _load_source(args)
    _write_reports([analysis.verify_bound(x, args.group_size, **_report_kwargs(args, meta))], args)
    return 0


def cmd_sweep(args) -> int:
    x, meta = _load_source(args)
    _write_reports(analysis.group_size_sweep(x, args.sizes, **_report_kwargs(args, meta)), args)
    return 0


def cmd_entropy(args) -> int:
    x, meta = _load_source(args)
    q, n = analysis.entropy_comparison(
        x, args.group_size, args.entropy_mode,
        x_range=_calib(args), int4_scale=args.int4_scale, shift_round=args.shift_round,
    )
    row = {"source": meta["distribution"], "param": meta.get("param", float("nan")), "seed": meta.get("seed", -1),
           "n": x.size, "group_size": args.group_size, "mode": args.entropy_mode,
           "quartz_entropy": q, "naive_entropy": n, "margin": q - n}
    if args.format == "json":
        text = json.dumps(row, sort_keys=True, indent=2) + "\n"
    else:
        text = ",".join(row) + "\n" + ",".join(repr(v) if isinstance(v, float) else str(v) for v in row.values()) + "\n"
    _emit(text, args.out)
    return 0


def cmd_sample(args) -> int:
    if args.rows <= 0 or args.n % args.rows:
        raise ValidationError(f"--rows {args.rows} does not divide --n {args.n}")
    x = sample_distribution(args.dist, args.param, args.n, args.seed)
    write_tensor(Tensor(x.data.reshape(args.rows, -1)), args.out)
    return 0


def selftest() -> list[tuple[str, bool]]:
    """Exhaustive checks; returns (name, passed) pairs."""
    results = []
    codes = np.arange(-127, 128).reshape(-1, 1)
    q = Int8Tensor(codes, QuantParams(1.0, 0))
    back = lzs.lzs_decompress(lzs.lzs_compress(q, 1)).codes.astype(np.int64).ravel()
    ok = True
    for c, r in zip(codes.ravel().tolist(), back.tolist()):
        m = abs(c)
        flag = lzs.flag_for_group([m])
        err = abs(c - r)
        ok &= err == m % (1 << flag) and err <= lzs.lzs_truncation_error_bound(m)
        ok &= (r == 0) or (r > 0) == (c > 0)
    results.append(("codec roundtrip over all 255 codes", bool(ok)))

    eq = all(
        max(29 - lzs.clz32(m), 0) == max(lzs.magnitude_bitlength(m) - 3, 0) for m in range(128)
    )
    results.append(("FLAG == max(H(m) - 3, 0) for m in 0..127", eq))

    worst = int(np.max(np.abs(codes.ravel() - back)))
    results.append(("worst-case stage-2 error <= 15 LSB", worst <= 15))
    return results


def cmd_selftest(args) -> int:
    results = selftest()
    for name, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(ok for _, ok in results) else 1


COMMANDS = {
    "quantize": cmd_quantize,
    "dequantize": cmd_dequantize,
    "matmul": cmd_matmul,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "entropy": cmd_entropy,
    "sample": cmd_sample,
    "selftest": cmd_selftest,
}


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    print("# quartz-lzs " + shlex.join(argv), file=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
