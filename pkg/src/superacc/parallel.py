"""Tree-reduction drivers over a worker pool.

``sum_tree`` sums each chunk into a dense accumulator and combines the leaves
pairwise with the carry-free add.  ``sum_truncated`` repeats the reduction
over gamma-truncated sparse accumulators, squaring gamma until the result is
provably the correctly rounded sum.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, TypeVar

import numpy as np

from .core import (DEFAULT_CONFIG, DenseAccumulator, RoundedSum, add_accumulators, check_finite,
                   ieee_special_sum, round_int, special_result)
from .sparse import SparseAccumulator, from_dense, least_kept_exponent, merge_add, to_dense

T = TypeVar("T")
U = TypeVar("U")


@dataclass(frozen=True)
class ReductionPlan:
    workers: int = 1
    chunk_size: int = 4096
    executor: str = "thread"  # "thread" or "process"
    arity = 2

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.executor not in ("thread", "process"):
            raise ValueError(f"unknown executor {self.executor!r}")

    def leaf_count(self, n: int) -> int:
        return -(-n // self.chunk_size)


class StopMode(enum.Enum):
    FLOAT_PROBE = "float-probe"
    EXPONENT_GAP = "exponent-gap"


class StoppedBy(enum.Enum):
    STOPPING_CONDITION = "StoppingCondition"
    UNTRUNCATED = "Untruncated"


@dataclass(frozen=True)
class TruncatedRunReport:
    iterations: int
    final_r: int
    stopped_by: StoppedBy
    result: RoundedSum


@dataclass(frozen=True)
class ConditionReport:
    c: float  # math.inf when the exact sum is zero
    log2_c: float


class WorkerPool:
    """Executor wrapper that runs inline for a single worker."""

    def __init__(self, workers: int = 1, executor: str = "thread") -> None:
        self._ex: Optional[Executor] = None
        if workers > 1:
            cls = ThreadPoolExecutor if executor == "thread" else ProcessPoolExecutor
            self._ex = cls(max_workers=workers)

    def map(self, fn: Callable[..., U], *iterables) -> list[U]:
        if self._ex is None:
            return list(map(fn, *iterables))
        return list(self._ex.map(fn, *iterables))

    def __enter__(self) -> WorkerPool:
        return self

    def __exit__(self, *exc) -> None:
        if self._ex is not None:
            self._ex.shutdown()


def prepare_input(xs, nonfinite: str) -> tuple[np.ndarray, Optional[RoundedSum]]:
    arr = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    if nonfinite == "ieee":
        special = ieee_special_sum(arr)
        if special is not None:
            return arr, special_result(special)
    elif nonfinite != "raise":
        raise ValueError(f"unknown non-finite policy {nonfinite!r}")
    check_finite(arr)
    return arr, None


def _chunks(arr: np.ndarray, size: int) -> list[np.ndarray]:
    return [arr[i:i + size] for i in range(0, arr.size, size)]


def _tree_reduce(nodes: list[T], combine: Callable[[T, T], T], pool: WorkerPool) -> T:
    while len(nodes) > 1:
        merged = pool.map(combine, nodes[0:-1:2], nodes[1::2])
        if len(nodes) % 2:
            merged.append(nodes[-1])
        nodes = merged
    return nodes[0]


def _dense_leaf(chunk: np.ndarray) -> DenseAccumulator:
    acc = DenseAccumulator()
    acc.add_many(chunk)
    acc.renormalize()
    return acc


def _sparse_leaf(chunk: np.ndarray) -> SparseAccumulator:
    return from_dense(_dense_leaf(chunk))


def sum_tree(xs: Sequence[float], plan: ReductionPlan = ReductionPlan(), *, nonfinite: str = "raise") -> RoundedSum:
    arr, special = prepare_input(xs, nonfinite)
    if special is not None:
        return special
    if arr.size == 0:
        return DenseAccumulator().rounded()
    with WorkerPool(plan.workers, plan.executor) as pool:
        leaves = pool.map(_dense_leaf, _chunks(arr, plan.chunk_size))
        root = _tree_reduce(leaves, add_accumulators, pool)
    return root.rounded()


def _ceil_log2(n: int) -> int:
    return (n - 1).bit_length()


def _exact_interval_is_stable(value: int, bound: int) -> bool:
    lo = round_int(value - bound)
    hi = round_int(value + bound)
    return lo.bits == hi.bits


def _gap_ok(lsb_exponent: int, least_exponent: int, n: int) -> bool:
    return lsb_exponent >= least_exponent + _ceil_log2(n)


def _ulp_exponent(y: float) -> int:
    return max(math.frexp(y)[1] - 53, -1074)


def stopping_condition(y: SparseAccumulator, n: int, mode: StopMode = StopMode.EXPONENT_GAP) -> bool:
    """Can the digits lost to truncation no longer change the rounded sum?

    Every dropped digit sits below the least retained one, so the lost mass is
    under ``n * 2**E`` with ``E = least_kept_exponent(y)``.  Both the exponent
    gap test and the float probe test only pin the result to one of two
    neighbouring doubles, so either is followed by an exact check that the
    whole interval ``y +- n*2**E`` rounds to a single double.
    """
    if not y.truncated_any:
        return True
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    least = least_kept_exponent(y)
    value = y.to_int()
    rounded = round_int(value, y.config).value
    if mode is StopMode.EXPONENT_GAP:
        if rounded == 0 or not math.isfinite(rounded):
            return False
        coarse = _gap_ok(_ulp_exponent(rounded), least, n)
    else:
        try:
            probe = math.ldexp(float(n), least)
        except OverflowError:
            probe = math.inf
        coarse = rounded + probe == rounded and rounded - probe == rounded
    if not coarse:
        return False
    return _exact_interval_is_stable(value, n << (least - y.config.min_bit))


def sum_truncated(xs: Sequence[float], plan: ReductionPlan = ReductionPlan(), r0: int = 2,
                  mode: StopMode = StopMode.EXPONENT_GAP, *, nonfinite: str = "raise") -> TruncatedRunReport:
    if r0 < 2:
        raise ValueError(f"r0 must be >= 2, got {r0}")
    arr, special = prepare_input(xs, nonfinite)
    if special is not None:
        return TruncatedRunReport(1, r0, StoppedBy.UNTRUNCATED, special)
    if arr.size == 0:
        return TruncatedRunReport(1, r0, StoppedBy.UNTRUNCATED, DenseAccumulator().rounded())
    r = r0
    iterations = 0
    with WorkerPool(plan.workers, plan.executor) as pool:
        leaves = pool.map(_sparse_leaf, _chunks(arr, plan.chunk_size))
        while True:
            iterations += 1
            root = _tree_reduce([replace(leaf, gamma=r) for leaf in leaves], merge_add, pool)
            if not root.truncated_any:
                stopped_by = StoppedBy.UNTRUNCATED
                break
            if stopping_condition(root, arr.size, mode):
                stopped_by = StoppedBy.STOPPING_CONDITION
                break
            r *= r
    return TruncatedRunReport(iterations, r, stopped_by, to_dense(root).rounded())


def condition_number(xs: Sequence[float]) -> ConditionReport:
    """Sum |x_i| over |sum x_i|, both sums exact, the ratio rounded once."""
    arr, _ = prepare_input(xs, "raise")
    signed = DenseAccumulator()
    signed.add_many(arr)
    absolute = DenseAccumulator()
    absolute.add_many(np.abs(arr))
    s = abs(signed.to_int())
    a = absolute.to_int()
    if s == 0:
        return ConditionReport(math.inf, math.inf)
    try:
        c = a / s
    except OverflowError:
        c = math.inf
    return ConditionReport(c, math.log2(a) - math.log2(s))
