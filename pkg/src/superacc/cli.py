"""Command-line front end: gen, sum, verify, bench."""

from __future__ import annotations

import argparse
import json
import re
import sys
from typing import Optional, Sequence, Union

from . import bench
from .core import RoundedSum
from .datasets import DatasetSpec, generate
from .errors import IoFailure, SuperaccError
from .extmem import MemoryBudget, sum_external, sum_inmemory_stream
from .io import FORMATS, iter_value_blocks, read_values, write_values

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
_SUFFIX = {"": 1, "k": 1 << 10, "m": 1 << 20, "g": 1 << 30}


def parse_size(text: str) -> int:
    """'64M' -> 67108864; bare integers are bytes."""
    m = re.fullmatch(r"\s*(\d+)\s*([kKmMgG]?)[iI]?[bB]?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    return int(m.group(1)) * _SUFFIX[m.group(2).lower()]


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _int_list(text: str) -> list[int]:
    return [int(float(t)) for t in text.split(",") if t]


def _engine_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", choices=bench.ALGOS, default="stream")
    p.add_argument("--in", dest="inp", default="-", help="input path, '-' for stdin")
    p.add_argument("--format", choices=FORMATS, default="bin")
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--executor", choices=("thread", "process"), default="thread")
    p.add_argument("--chunk", type=_positive, default=4096, help="leaf size for tree engines")
    p.add_argument("--reducers", type=_positive, default=1)
    p.add_argument("--partitions", type=_positive, default=None)
    p.add_argument("--mem-budget", type=parse_size, default=parse_size("64M"))
    p.add_argument("--block", type=_positive, default=1 << 16, help="records per extmem block")
    p.add_argument("--tmpdir", default=None)
    p.add_argument("--nonfinite", choices=("raise", "ieee"), default="raise")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="superacc", description="Exact, correctly rounded summation of doubles.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--kind", type=int, required=True, choices=(1, 2, 3, 4))
    g.add_argument("--n", type=lambda s: int(float(s)), required=True)
    g.add_argument("--delta", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mantissa-bits", type=int, default=52)
    g.add_argument("--out", default="-")
    g.add_argument("--format", choices=FORMATS, default="bin")

    s = sub.add_parser("sum", help="sum a value stream")
    _engine_args(s)
    s.add_argument("--json", action="store_true")

    v = sub.add_parser("verify", help="compare an engine against the oracle")
    _engine_args(v)
    v.add_argument("--json", action="store_true")

    b = sub.add_parser("bench", help="time engines over a dataset grid")
    b.add_argument("--algos", default="stream,tree,truncated,mapreduce,extmem")
    b.add_argument("--sizes", type=_int_list, default=[10**5])
    b.add_argument("--kinds", type=_int_list, default=[2])
    b.add_argument("--deltas", type=_int_list, default=[2000])
    b.add_argument("--threads", default="1", help="comma list, or 'max' for 1 and every core")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--no-check", action="store_true", help="skip the oracle comparison")
    b.add_argument("--output", choices=("csv", "json"), default="csv")
    b.add_argument("--chunk", type=_positive, default=4096)
    b.add_argument("--reducers", type=_positive, default=1)
    b.add_argument("--mem-budget", type=parse_size, default=parse_size("64M"))
    b.add_argument("--block", type=_positive, default=1 << 16)
    b.add_argument("--tmpdir", default=None)
    return parser


def _options(args: argparse.Namespace) -> bench.EngineOptions:
    return bench.EngineOptions(
        workers=getattr(args, "workers", 1), chunk=args.chunk, executor=getattr(args, "executor", "thread"),
        reducers=args.reducers, partitions=getattr(args, "partitions", None), mem_budget=args.mem_budget,
        block=args.block, tmpdir=args.tmpdir, nonfinite=getattr(args, "nonfinite", "raise"))


class _Counted:
    """Pass-through iterator over value blocks that counts values."""

    def __init__(self, blocks) -> None:
        self.blocks = blocks
        self.n = 0

    def __iter__(self):
        for blk in self.blocks:
            self.n += blk.size
            yield blk


def _compute(args: argparse.Namespace) -> tuple[Union[RoundedSum, float], int]:
    opts = _options(args)
    if args.algo in ("stream", "extmem"):
        # these engines consume a stream; never materialize the input
        src = _Counted(iter_value_blocks(args.inp, args.format))
        if args.algo == "stream":
            return sum_inmemory_stream(src, nonfinite=opts.nonfinite), src.n
        import tempfile
        with tempfile.TemporaryDirectory(dir=opts.tmpdir) as tmp:
            res = sum_external(src, MemoryBudget(opts.mem_budget, opts.block), tmp, nonfinite=opts.nonfinite)
        return res, src.n
    xs = read_values(args.inp, args.format)
    return bench.run_algorithm(args.algo, xs, opts), int(xs.size)


def result_record(result: Union[RoundedSum, float], n: int) -> dict:
    value = bench.value_of(result)
    exact = direction = None
    if isinstance(result, RoundedSum):
        exact, direction = result.exact, result.direction.value
    return {"value_hex": bench.hex_bits(value), "value": repr(value), "exact": exact,
            "direction": direction, "n": n}


def _emit(record: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(record["value_hex"], record["value"])


def _cmd_gen(args: argparse.Namespace) -> int:
    spec = DatasetSpec(args.kind, args.n, args.delta, args.seed, args.mantissa_bits)
    write_values(generate(spec), args.out, args.format)
    return EXIT_OK


def _cmd_sum(args: argparse.Namespace) -> int:
    result, n = _compute(args)
    _emit(result_record(result, n), args.json)
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    xs = read_values(args.inp, args.format)
    opts = _options(args)
    result = bench.run_algorithm(args.algo, xs, opts)
    truth = bench.run_algorithm("oracle", xs, opts)
    got, want = result_record(result, int(xs.size)), result_record(truth, int(xs.size))
    ok = got["value_hex"] == want["value_hex"]
    if args.json:
        print(json.dumps({"algo": args.algo, "match": ok, "result": got, "oracle": want}, sort_keys=True))
    else:
        print(f"{'OK' if ok else 'MISMATCH'} {args.algo} {got['value_hex']} oracle {want['value_hex']}")
    return EXIT_OK if ok else EXIT_MISMATCH


def _cmd_bench(args: argparse.Namespace) -> int:
    algos = [a for a in args.algos.split(",") if a]
    unknown = set(algos) - set(bench.ALGOS)
    if unknown:
        raise ValueError(f"unknown algorithms: {', '.join(sorted(unknown))}")
    if args.threads == "max":
        top = bench.max_threads()
        threads = sorted({1, top})
    else:
        threads = _int_list(args.threads)
    opts = bench.EngineOptions(chunk=args.chunk, reducers=args.reducers, mem_budget=args.mem_budget,
                               block=args.block, tmpdir=args.tmpdir)
    reports = bench.run_bench(algos, args.sizes, args.kinds, args.deltas, threads, args.seed,
                              check=not args.no_check, opts=opts)
    sys.stdout.write(bench.to_csv(reports) if args.output == "csv" else bench.to_json(reports) + "\n")
    # baselines are expected to miss; only exact engines gate the exit status
    failed = any(r.passed is False and r.algo in bench.EXACT_ALGOS for r in reports)
    return EXIT_MISMATCH if failed else EXIT_OK


_COMMANDS = {"gen": _cmd_gen, "sum": _cmd_sum, "verify": _cmd_verify, "bench": _cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.cmd](args)
    except IoFailure as exc:
        print(f"superacc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SuperaccError, ValueError) as exc:
        print(f"superacc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
