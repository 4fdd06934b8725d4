"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line."""

from __future__ import annotations

import itertools
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from superacc.bench import max_threads, run_bench
from superacc.core import DenseAccumulator, RadixConfig, add_accumulators
from superacc.datasets import DatasetSpec, generate
from superacc.extmem import ExtMemStats, MemoryBudget, sum_external, sum_inmemory_stream
from superacc.mapreduce import JobConfig, run_job, split_partitions
from superacc.oracle import naive_sum, oracle_sum
from superacc.parallel import ReductionPlan, StopMode, StoppedBy, condition_number, sum_tree, sum_truncated
from superacc.sparse import SparseAccumulator, from_dense, from_double
from superacc.wire import RECORD_SIZE, decode, encode

KINDS = (1, 2, 3, 4)
DELTAS = (10, 100, 2000)
SIZES = (10**3, 10**6)
SEEDS = (0, 1, 2)
ENGINES = ("stream", "tree", "truncated", "extmem", "mapreduce")
GRID_BUDGET = MemoryBudget(8 << 20, 1 << 16)


def run_engine(name: str, xs: np.ndarray, tmpdir: str) -> int:
    if name == "stream":
        return sum_inmemory_stream(xs).bits
    if name == "tree":
        return sum_tree(xs, ReductionPlan(chunk_size=4096)).bits
    if name == "truncated":
        return sum_truncated(xs).result.bits
    if name == "extmem":
        return sum_external(xs, GRID_BUDGET, tmpdir).bits
    if name == "mapreduce":
        return run_job(split_partitions(xs, 16), JobConfig(reducers=4, partitions=16, seed=1)).bits
    raise ValueError(name)


@dataclass
class Case:
    spec: DatasetSpec
    oracle: int
    engines: dict[str, int] = field(default_factory=dict)
    reports: dict[StopMode, object] = field(default_factory=dict)
    condition: float = float("nan")


@pytest.fixture(scope="module")
def grid() -> list[Case]:
    cases = []
    with tempfile.TemporaryDirectory() as tmp:
        for kind, delta, n, seed in itertools.product(KINDS, DELTAS, SIZES, SEEDS):
            spec = DatasetSpec(kind, n, delta, seed)
            xs = generate(spec)
            case = Case(spec, oracle_sum(xs).bits)
            for name in ENGINES:
                case.engines[name] = run_engine(name, xs, tmp)
            for mode in StopMode:
                case.reports[mode] = sum_truncated(xs, mode=mode)
            if kind == 1:
                case.condition = condition_number(xs).c
            cases.append(case)
    return cases


def label(spec: DatasetSpec) -> str:
    return f"kind={spec.kind} delta={spec.delta} n={spec.n} seed={spec.seed}"


def test_c01_oracle_bit_equality(grid):
    mismatches = [f"{name} {label(c.spec)}" for c in grid for name, bits in c.engines.items() if bits != c.oracle]
    checked = sum(len(c.engines) for c in grid)
    record_criterion(1, not mismatches,
                     f"{checked} engine runs over {len(grid)} datasets, {len(mismatches)} differ from oracle (0 ulp)")
    assert not mismatches, mismatches[:10]


def _pairwise_batch(cfg: RadixConfig, rng: np.random.Generator, window: int) -> tuple[int, int]:
    """One add_accumulators call holding many independent windowed pairs."""
    r = cfg.radix
    slot = window + 1  # one zero digit above each window absorbs its carry
    pairs = (cfg.digit_count - 1) // slot
    edges = np.array([r - 1, r - 2, r // 2, r // 2 - 1, 1, 0], dtype=np.int64)
    edges = np.concatenate([edges, -edges])

    def draw() -> np.ndarray:
        d = np.zeros(cfg.digit_count, dtype=np.int64)
        body = rng.integers(-(r - 1), r, size=(pairs, window), dtype=np.int64)
        pick = rng.random((pairs, window)) < 0.3
        body[pick] = rng.choice(edges, size=int(pick.sum()))
        d[:pairs * slot].reshape(pairs, slot)[:, :window] = body
        return d

    a = DenseAccumulator(cfg, draw())
    b = DenseAccumulator(cfg, draw())
    s = add_accumulators(a, b).digits
    p = a.digits + b.digits
    carry = (p >= r - 1).astype(np.int64) - (p <= 1 - r).astype(np.int64)
    interim = p - carry * r
    expected = interim.copy()
    expected[1:] += carry[:-1]
    failures = 0
    failures += int(np.abs(s).max() > r - 1)
    failures += int(not set(np.unique(carry).tolist()) <= {-1, 0, 1})
    failures += int(np.abs(interim).max() > r - 2)
    failures += int(not np.array_equal(s, expected))
    weights = [r**j for j in range(slot)]
    for k in range(pairs):
        lo = k * slot
        va = sum(int(d) * w for d, w in zip(a.digits[lo:lo + slot], weights))
        vb = sum(int(d) * w for d, w in zip(b.digits[lo:lo + slot], weights))
        vs = sum(int(d) * w for d, w in zip(s[lo:lo + slot], weights))
        failures += int(va + vb != vs)
    failures += int(DenseAccumulator(cfg, s).to_int() != a.to_int() + b.to_int())
    return pairs, failures


def test_c02_pairwise_rule_properties():
    rng = np.random.default_rng(2024)
    details, total_failures = [], 0
    for width in (3, 8, 51):
        cfg = RadixConfig(width=width)
        pairs = failures = 0
        while pairs < 10**5:
            got, bad = _pairwise_batch(cfg, rng, window=4)
            pairs += got
            failures += bad
        details.append(f"w={width}: {pairs} pairs")
        total_failures += failures
    record_criterion(2, total_failures == 0, f"{'; '.join(details)}; {total_failures} failures")
    assert total_failures == 0


def test_c03_permutation_and_partition_invariance():
    base = generate(DatasetSpec(3, 10**4, 2000, 11))
    want = oracle_sum(base).bits
    rng = np.random.default_rng(3)
    seen: set[int] = set()
    runs = 0
    with tempfile.TemporaryDirectory() as tmp:
        for _ in range(50):
            xs = base[rng.permutation(base.size)]
            results = [sum_inmemory_stream(xs).bits]
            for block in (64, 1024):
                results.append(sum_external(xs, MemoryBudget(4 * block * RECORD_SIZE, block), tmp).bits)
            for p in (1, 2, 8):
                for chunk in (97, 2048):
                    plan = ReductionPlan(workers=p, chunk_size=chunk)
                    results.append(sum_tree(xs, plan).bits)
                    results.append(sum_truncated(xs, plan).result.bits)
                for parts in (p, 4 * p + 1):
                    cfg = JobConfig(reducers=max(1, p // 2), partitions=parts, workers=p, seed=parts)
                    results.append(run_job(split_partitions(xs, parts), cfg).bits)
            seen.update(results)
            runs += len(results)
    ok = seen == {want}
    record_criterion(3, ok, f"{runs} runs over 50 permutations, p in {{1,2,8}}: {len(seen)} distinct bit pattern(s)")
    assert ok


def test_c04_sum_zero(grid):
    zero_cases = [c for c in grid if c.spec.kind == 4]
    bad = [f"{name} {label(c.spec)}" for c in zero_cases for name, bits in c.engines.items() if bits != 0]
    bad += [label(c.spec) for c in zero_cases if c.oracle != 0]
    extra = []
    for seed in range(10):
        xs = generate(DatasetSpec(4, 1001 + seed, 2000, 100 + seed))
        if sum_tree(xs).bits != 0 or sum_inmemory_stream(xs).bits != 0:
            extra.append(seed)
    ok = not bad and not extra
    record_criterion(4, ok, f"{len(zero_cases)} kind-4 datasets plus 10 extra lengths all give +0.0 "
                            f"(0x0000000000000000)")
    assert ok, (bad, extra)


def test_c05_condition_one(grid):
    cs = [(label(c.spec), c.condition) for c in grid if c.spec.kind == 1]
    bad = [(lbl, c) for lbl, c in cs if c != 1.0]
    record_criterion(5, not bad, f"{len(cs)} kind-1 datasets, condition number exactly 1.0 in {len(cs) - len(bad)}")
    assert not bad


def test_c06_truncated_soundness(grid):
    problems, iters = [], []
    for c in grid:
        for mode, rep in c.reports.items():
            iters.append(rep.iterations)
            if rep.result.bits != c.engines["tree"]:
                problems.append(f"value {mode.value} {label(c.spec)}")
            if rep.iterations > 5:
                problems.append(f"iterations={rep.iterations} {label(c.spec)}")
            if c.spec.kind == 1 and rep.iterations > 2:
                problems.append(f"kind 1 took {rep.iterations} {label(c.spec)}")
    early = sum(1 for c in grid for rep in c.reports.values()
                if c.spec.kind == 1 and rep.stopped_by is StoppedBy.STOPPING_CONDITION)
    record_criterion(6, not problems, f"{len(iters)} truncated runs equal sum_tree; max iterations {max(iters)}; "
                                      f"{early} kind-1 runs stopped early by the condition")
    assert not problems, problems[:10]


def test_c07_external_memory_under_pressure(tmp_path):
    xs = generate(DatasetSpec(2, 10**6, 2000, 0))
    block = 1 << 16
    budget = MemoryBudget(4 * block * RECORD_SIZE * 2, block)
    stats = ExtMemStats()
    got = sum_external(xs, budget, tmp_path, stats=stats).bits
    tree = sum_tree(xs).bits
    stream = sum_inmemory_stream(xs).bits
    ok = (got == tree == stream and stats.runs >= 8 and stats.merge_passes >= 2
          and stats.peak_resident_bytes <= budget.memory_bytes)
    record_criterion(7, ok, f"{stats.runs} runs, {stats.merge_passes} merge passes, peak "
                            f"{stats.peak_resident_bytes} <= budget {budget.memory_bytes} bytes, bit-equal to tree/stream")
    assert ok


def test_c08_wire_format():
    fixtures = Path(__file__).parent / "fixtures"
    rng = np.random.default_rng(8)
    bad = 0
    for _ in range(10**4):
        k = int(rng.integers(0, 8))
        acc = DenseAccumulator()
        acc.add_many(rng.standard_normal(k) * np.exp2(rng.integers(-1000, 1000, k)))
        acc.renormalize()
        s = from_dense(acc)
        back = decode(encode(s))
        bad += int(back.digits != s.digits or back.to_int() != acc.to_int())
    golden_empty = encode(SparseAccumulator()) == (fixtures / "empty.ssac").read_bytes()
    golden_one = encode(from_double(1.0)) == (fixtures / "one.ssac").read_bytes()
    ok = bad == 0 and golden_empty and golden_one
    record_criterion(8, ok, f"10000 round-trips, {bad} mismatches; golden empty={golden_empty} one={golden_one}")
    assert ok


def test_c09_baseline_separation():
    differs = []
    for seed in SEEDS:
        xs = generate(DatasetSpec(3, 10**6, 2000, seed))
        differs.append(naive_sum(xs) != oracle_sum(xs).value)
    ok = any(differs)
    record_criterion(9, ok, f"naive sum differs from oracle in {sum(differs)} of {len(SEEDS)} seeds")
    assert ok


def test_c10_scaling_report():
    n = int(os.environ.get("SUPERACC_SCALING_N", 10**8))
    top = max_threads()
    threads = sorted({1, top})
    reports = run_bench(["tree"], [n], kinds=[2], deltas=[2000], threads=threads, check=False)
    for r in reports:
        print(f"  bench tree n={r.n} threads={r.threads} seconds={r.seconds:.2f} "
              f"throughput={r.throughput:.3g}/s value={r.value_hex}")
    same_bits = len({r.value_hex for r in reports}) == 1
    if top == 1:
        record_criterion(10, False, f"not gated: only 1 core available, speedup unmeasurable "
                                    f"(p=1 took {reports[0].seconds:.1f}s at n={n})")
        assert same_bits
        pytest.xfail("only one core available; the speedup comparison needs at least two")
    faster = reports[-1].seconds < reports[0].seconds
    record_criterion(10, faster and same_bits, f"not gated: p=1 {reports[0].seconds:.1f}s, "
                                               f"p={top} {reports[-1].seconds:.1f}s at n={n}")
    assert same_bits
