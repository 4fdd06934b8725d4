"""Engine registry and the benchmark grid used by the CLI."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import RoundedSum, float_to_bits
from .datasets import DatasetSpec, generate
from .extmem import MemoryBudget, sum_external, sum_inmemory_stream
from .mapreduce import JobConfig, run_job, split_partitions
from .oracle import compensated_sum, naive_sum, oracle_sum
from .parallel import ReductionPlan, sum_tree, sum_truncated

ALGOS = ("naive", "compensated", "stream", "tree", "truncated", "extmem", "mapreduce", "oracle")
EXACT_ALGOS = ("stream", "tree", "truncated", "extmem", "mapreduce")
CSV_COLUMNS = ("algo", "n", "kind", "delta", "threads", "seconds", "throughput", "value_hex", "pass")


@dataclass
class EngineOptions:
    workers: int = 1
    chunk: int = 4096
    executor: str = "thread"
    reducers: int = 1
    partitions: Optional[int] = None  # defaults to max(workers, reducers)
    mem_budget: int = 64 << 20
    block: int = 1 << 16
    tmpdir: Optional[str] = None
    nonfinite: str = "raise"


def run_algorithm(algo: str, xs: np.ndarray, opts: EngineOptions = EngineOptions()) -> Union[RoundedSum, float]:
    """Sum ``xs`` with the named engine; baselines return a bare float."""
    if algo == "naive":
        return naive_sum(xs)
    if algo == "compensated":
        return compensated_sum(xs)
    if algo == "oracle":
        arr = np.asarray(xs, dtype=np.float64)
        if opts.nonfinite == "ieee" and arr.size and not np.isfinite(arr).all():
            return sum_inmemory_stream(arr, nonfinite="ieee")
        return oracle_sum(arr)
    if algo == "stream":
        return sum_inmemory_stream(xs, nonfinite=opts.nonfinite)
    plan = ReductionPlan(workers=opts.workers, chunk_size=opts.chunk, executor=opts.executor)
    if algo == "tree":
        return sum_tree(xs, plan, nonfinite=opts.nonfinite)
    if algo == "truncated":
        return sum_truncated(xs, plan, nonfinite=opts.nonfinite).result
    if algo == "mapreduce":
        parts = opts.partitions or max(opts.workers, opts.reducers)
        cfg = JobConfig(reducers=opts.reducers, partitions=parts, workers=opts.workers)
        return run_job(split_partitions(xs, parts), cfg, nonfinite=opts.nonfinite)
    if algo == "extmem":
        budget = MemoryBudget(opts.mem_budget, opts.block)
        with tempfile.TemporaryDirectory(dir=opts.tmpdir) as tmp:
            return sum_external(xs, budget, tmp, nonfinite=opts.nonfinite)
    raise ValueError(f"unknown algorithm {algo!r}")


def value_of(result: Union[RoundedSum, float]) -> float:
    return result.value if isinstance(result, RoundedSum) else float(result)


def hex_bits(x: float) -> str:
    return "0x%016x" % float_to_bits(x)


@dataclass
class BenchReport:
    algo: str
    n: int
    kind: int
    delta: int
    threads: int
    seconds: float
    throughput: float
    value_hex: str
    passed: Optional[bool] = field(default=None)

    def row(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def run_bench(algos: Sequence[str], sizes: Sequence[int], kinds: Sequence[int] = (2,),
              deltas: Sequence[int] = (2000,), threads: Sequence[int] = (1,), seed: int = 0,
              check: bool = True, opts: EngineOptions = EngineOptions()) -> list[BenchReport]:
    """Time every (algo, size, kind, delta, threads) cell; ``pass`` is None when unchecked."""
    reports = []
    for n in sizes:
        for kind in kinds:
            for delta in deltas:
                xs = generate(DatasetSpec(kind, n, delta, seed))
                truth = oracle_sum(xs).bits if check else None
                for algo in algos:
                    for p in threads:
                        cell = EngineOptions(**{**asdict(opts), "workers": p})
                        t0 = time.perf_counter()
                        value = value_of(run_algorithm(algo, xs, cell))
                        dt = time.perf_counter() - t0
                        reports.append(BenchReport(
                            algo, n, kind, delta, p, dt, n / dt if dt > 0 else float("inf"),
                            hex_bits(value), None if truth is None else float_to_bits(value) == truth))
    return reports


def max_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def to_csv(reports: Sequence[BenchReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.row()
        row["seconds"] = f"{r.seconds:.6f}"
        row["throughput"] = f"{r.throughput:.1f}"
        row["pass"] = "" if r.passed is None else str(r.passed).lower()
        w.writerow(row)
    return buf.getvalue()


def to_json(reports: Sequence[BenchReport]) -> str:
    return json.dumps([r.row() for r in reports], indent=2)
