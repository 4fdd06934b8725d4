"""In-process simulation of a single-round MapReduce summation job.

Each input partition is combined into one sparse accumulator, serialized,
keyed to a reducer, shuffled as bytes, merged per reducer, and finally merged
and rounded by the driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Optional, Sequence

import numpy as np

from .core import DenseAccumulator, RoundedSum, ieee_special_sum, special_result
from .parallel import WorkerPool, prepare_input
from .sparse import SparseAccumulator, from_dense, merge_add, to_dense
from .wire import decode, encode

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


@dataclass(frozen=True)
class JobConfig:
    reducers: int = 1
    partitions: int = 1
    assign: str = "random"  # "random" or "round-robin"
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.reducers < 1:
            raise ValueError(f"reducers must be >= 1, got {self.reducers}")
        if self.partitions < 1:
            raise ValueError(f"partitions must be >= 1, got {self.partitions}")
        if self.assign not in ("random", "round-robin"):
            raise ValueError(f"unknown assignment {self.assign!r}")

    def reducer_keys(self, count: int) -> list[int]:
        """Reducer key in ``[1, reducers]`` for each of ``count`` map outputs."""
        if self.assign == "round-robin":
            return [i % self.reducers + 1 for i in range(count)]
        keys = []
        state = self.seed & _MASK64
        for _ in range(count):
            state, z = splitmix64(state)
            keys.append((z * self.reducers >> 64) + 1)
        return keys


@dataclass
class JobStats:
    shuffled_bytes: int = 0
    map_outputs: int = 0
    reducer_inputs: dict[int, int] = field(default_factory=dict)
    reduce_output_bytes: int = 0


def split_partitions(xs: np.ndarray, count: int) -> list[np.ndarray]:
    return np.array_split(np.asarray(xs, dtype=np.float64), count)


def _combine(part: np.ndarray) -> bytes:
    acc = DenseAccumulator()
    acc.add_many(part)
    acc.renormalize()
    return encode(from_dense(acc))


def _reduce(payloads: list[bytes]) -> bytes:
    return encode(reduce(merge_add, map(decode, payloads), SparseAccumulator()))


def run_job(partitions: Sequence[Sequence[float]], cfg: JobConfig = JobConfig(), *,
            stats: Optional[JobStats] = None, nonfinite: str = "raise") -> RoundedSum:
    parts = [prepare_input(p, nonfinite) for p in partitions]
    specials = [s.value for _, s in parts if s is not None]
    if specials:
        return special_result(ieee_special_sum(specials))
    arrays = [a for a, _ in parts]
    keys = cfg.reducer_keys(len(arrays))
    with WorkerPool(cfg.workers) as pool:
        payloads = pool.map(_combine, arrays)
        groups: dict[int, list[bytes]] = {k: [] for k in range(1, cfg.reducers + 1)}
        for key, payload in zip(keys, payloads):
            groups[key].append(payload)
        outputs = pool.map(_reduce, list(groups.values()))
    if stats is not None:
        stats.map_outputs = len(payloads)
        stats.shuffled_bytes = sum(map(len, payloads))
        stats.reducer_inputs = {k: len(v) for k, v in groups.items()}
        stats.reduce_output_bytes = sum(map(len, outputs))
    total = reduce(merge_add, map(decode, outputs), SparseAccumulator())
    return to_dense(total).rounded()
