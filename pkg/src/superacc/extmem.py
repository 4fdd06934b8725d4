"""External-memory summation under an explicit memory budget.

Pipeline: decompose input into 12-byte component records and spill sorted
runs of ``B`` records; k-way merge runs (several passes if needed); scan the
merged stream in ascending digit order through a small window, writing each
digit to disk once the scan has passed it; then read the digit file back to
front, canonicalize and round.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .core import (DEFAULT_CONFIG, DenseAccumulator, RoundedSum, check_finite, decompose_array,
                   ieee_special_sum, round_to_double, special_result)
from .errors import BudgetTooSmall, CapacityOverflow, IoFailure
from .wire import RECORD_DTYPE, RECORD_SIZE

WINDOW = 4
RUN_NAME = "run_{:04d}.cmp"
DIGIT_FILE = "digits.cmp"

Source = Union[np.ndarray, Iterable[float], Iterable[np.ndarray]]


@dataclass(frozen=True)
class MemoryBudget:
    memory_bytes: int
    block_records: int

    def __post_init__(self) -> None:
        if self.block_records < 1:
            raise BudgetTooSmall(f"block size must be >= 1 record, got {self.block_records}")
        if self.memory_bytes < 2 * self.block_records * RECORD_SIZE:
            raise BudgetTooSmall(
                f"{self.memory_bytes} bytes cannot hold two blocks of {self.block_records} records")

    @property
    def fan_in(self) -> int:
        return max(2, self.memory_bytes // (2 * self.block_records * RECORD_SIZE))

    @property
    def page_records(self) -> int:
        """Records read per run per refill; merge inputs plus output stay under budget."""
        return max(1, min(self.block_records, self.memory_bytes // (2 * RECORD_SIZE * (self.fan_in + 1))))


@dataclass
class ExtMemStats:
    values: int = 0
    records: int = 0
    runs: int = 0
    merge_passes: int = 0
    digits_emitted: int = 0
    peak_resident_bytes: int = 0
    resident_bytes: int = 0
    limit_bytes: int = 0
    run_sizes: list[int] = field(default_factory=list)

    def hold(self, nbytes: int) -> None:
        self.resident_bytes += nbytes
        self.peak_resident_bytes = max(self.peak_resident_bytes, self.resident_bytes)
        assert self.resident_bytes <= self.limit_bytes, (
            f"resident {self.resident_bytes} bytes exceeds budget {self.limit_bytes}")

    def release(self, nbytes: int) -> None:
        self.resident_bytes -= nbytes


def iter_blocks(source: Source, size: int) -> Iterator[np.ndarray]:
    """Yield float64 arrays of at most ``size`` values from any supported source."""
    if isinstance(source, np.ndarray):
        flat = source.ravel()
        for i in range(0, flat.size, size):
            yield np.asarray(flat[i:i + size], dtype=np.float64)
        return
    buf: list[float] = []
    for item in source:
        if isinstance(item, np.ndarray):
            if buf:
                yield np.array(buf, dtype=np.float64)
                buf = []
            yield from iter_blocks(item, size)
            continue
        buf.append(float(item))
        if len(buf) == size:
            yield np.array(buf, dtype=np.float64)
            buf = []
    if buf:
        yield np.array(buf, dtype=np.float64)


class _SpecialTracker:
    def __init__(self, policy: str) -> None:
        if policy not in ("raise", "ieee"):
            raise ValueError(f"unknown non-finite policy {policy!r}")
        self.policy = policy
        self.seen: list[float] = []

    def filter(self, block: np.ndarray) -> np.ndarray:
        if self.policy == "raise":
            check_finite(block)
            return block
        bad = ~np.isfinite(block)
        if bad.any():
            self.seen.append(ieee_special_sum(block[bad]))
            return block[~bad]
        return block

    def result(self) -> Optional[RoundedSum]:
        return special_result(ieee_special_sum(self.seen)) if self.seen else None


def sum_inmemory_stream(source: Source, *, nonfinite: str = "raise") -> RoundedSum:
    """Single pass into one resident dense accumulator."""
    specials = _SpecialTracker(nonfinite)
    acc = DenseAccumulator()
    for block in iter_blocks(source, 1 << 16):
        acc.add_many(specials.filter(block))
    return specials.result() or acc.rounded()


def _io(path: Path, exc: OSError) -> IoFailure:
    return IoFailure(path, exc.strerror or type(exc).__name__)


def _components(block: np.ndarray) -> np.ndarray:
    idx, mant = decompose_array(block, DEFAULT_CONFIG)
    keep = mant != 0
    out = np.empty(int(keep.sum()), dtype=RECORD_DTYPE)
    out["index"] = idx[keep]
    out["mantissa"] = mant[keep]
    return out


class _RunWriter:
    def __init__(self, tmpdir: Path, stats: ExtMemStats) -> None:
        self.tmpdir = tmpdir
        self.stats = stats
        self.counter = 0

    def new_path(self) -> Path:
        path = self.tmpdir / RUN_NAME.format(self.counter)
        self.counter += 1
        return path

    def write_sorted(self, records: np.ndarray) -> Path:
        path = self.new_path()
        order = np.argsort(records["index"], kind="stable")
        try:
            records[order].tofile(path)
        except OSError as exc:
            raise _io(path, exc) from exc
        return path


def _generate_runs(source: Source, budget: MemoryBudget, writer: _RunWriter, stats: ExtMemStats,
                   specials: _SpecialTracker) -> list[Path]:
    b = budget.block_records
    values_per_read = max(1, b // 4)
    runs = []
    buf = np.empty(0, dtype=RECORD_DTYPE)
    for block in iter_blocks(source, values_per_read):
        stats.hold(block.nbytes)
        finite = specials.filter(block)
        comps = _components(finite)
        stats.hold(comps.nbytes)
        stats.release(block.nbytes)
        stats.values += finite.size
        stats.records += comps.size
        buf = np.concatenate([buf, comps])
        while buf.size >= b:
            runs.append(writer.write_sorted(buf[:b]))
            stats.run_sizes.append(b)
            buf = buf[b:]
            stats.release(b * RECORD_SIZE)
    if buf.size:
        runs.append(writer.write_sorted(buf))
        stats.run_sizes.append(int(buf.size))
        stats.release(buf.nbytes)
    stats.runs = len(runs)
    return runs


class _RunReader:
    def __init__(self, path: Path, page: int) -> None:
        self.path = path
        self.page = page
        try:
            self.fh = open(path, "rb")
        except OSError as exc:
            raise _io(path, exc) from exc
        self.exhausted = False

    def next_page(self) -> np.ndarray:
        try:
            data = np.fromfile(self.fh, dtype=RECORD_DTYPE, count=self.page)
        except OSError as exc:
            raise _io(self.path, exc) from exc
        if data.size < self.page:
            self.exhausted = True
        return data

    def close(self) -> None:
        self.fh.close()


def _merge(paths: list[Path], page: int, stats: ExtMemStats) -> Iterator[np.ndarray]:
    """k-way merge of sorted run files, yielding sorted batches.

    Each round emits every buffered record whose index is no larger than the
    smallest last-buffered index among runs that still have data on disk, so
    at least one buffer drains and gets refilled per round.
    """
    readers = [_RunReader(p, page) for p in paths]
    try:
        bufs = []
        for r in readers:
            bufs.append(r.next_page())
            stats.hold(bufs[-1].nbytes)
        while any(b.size for b in bufs):
            pending = [int(b["index"][-1]) for b, r in zip(bufs, readers) if b.size and not r.exhausted]
            limit = min(pending) if pending else None
            parts = []
            for i, b in enumerate(bufs):
                if not b.size:
                    continue
                cut = b.size if limit is None else int(np.searchsorted(b["index"], limit, side="right"))
                parts.append(b[:cut])
                bufs[i] = b[cut:]
            out = np.concatenate(parts)
            out = out[np.argsort(out["index"], kind="stable")]
            stats.hold(out.nbytes)
            yield out
            stats.release(2 * out.nbytes)
            for i, r in enumerate(readers):
                if not bufs[i].size and not r.exhausted:
                    bufs[i] = r.next_page()
                    stats.hold(bufs[i].nbytes)
    finally:
        for r in readers:
            r.close()


def _merge_to_file(paths: list[Path], budget: MemoryBudget, writer: _RunWriter, stats: ExtMemStats) -> Path:
    out_path = writer.new_path()
    try:
        with open(out_path, "wb") as fh:
            for batch in _merge(paths, budget.page_records, stats):
                batch.tofile(fh)
    except OSError as exc:
        raise _io(out_path, exc) from exc
    return out_path


def _remove(paths: Iterable[Path]) -> None:
    for p in paths:
        try:
            os.remove(p)
        except FileNotFoundError:
            pass


def _exact_group_sums(batch: np.ndarray) -> Iterator[tuple[int, int]]:
    """(index, exact mantissa total) for each run of equal indices in a sorted batch."""
    index = batch["index"]
    mant = batch["mantissa"]
    starts = np.flatnonzero(np.diff(index, prepend=index[0] - 1))
    # split 51-bit mantissas so int64 group sums cannot overflow for < 2**37 records
    hi = np.add.reduceat(mant >> 26, starts)
    lo = np.add.reduceat(mant & ((1 << 26) - 1), starts)
    for i, h, l in zip(index[starts].tolist(), hi.tolist(), lo.tolist()):
        yield i, (h << 26) + l


class _WindowScan:
    """Fold an ascending stream of components into a WINDOW-digit buffer.

    Digits below the current index can receive nothing more, because carries
    move upward only; each is balanced, its carry pushed to the next slot,
    and written out.
    """

    def __init__(self, path: Path, page: int, stats: ExtMemStats) -> None:
        cfg = DEFAULT_CONFIG
        self.w = cfg.width
        self.half = cfg.radix >> 1
        self.mask = cfg.mask
        self.digit_count = cfg.digit_count
        self.path = path
        self.page = page
        self.stats = stats
        self.base: Optional[int] = None
        self.win = [0] * WINDOW
        self.out: list[tuple[int, int]] = []
        try:
            self.fh = open(path, "wb")
        except OSError as exc:
            raise _io(path, exc) from exc

    def _emit_one(self) -> None:
        d = self.win[0]
        low = ((d + self.half) & self.mask) - self.half
        carry = (d - low) >> self.w
        if low:
            self.out.append((self.base, low))
            if len(self.out) >= self.page:
                self._flush()
        self.win = self.win[1:] + [0]
        self.win[0] += carry
        self.base += 1
        if self.base >= self.digit_count and any(self.win):
            raise CapacityOverflow("carry out of the most significant digit")

    def _advance_to(self, index: int) -> None:
        assert index >= self.base, "component stream is not sorted by index"
        while self.base < index:
            if not any(self.win):
                self.base = index
                return
            self._emit_one()

    def fold(self, index: int, total: int) -> None:
        if self.base is None:
            self.base = index
        self._advance_to(index)
        v = self.win[0] + total
        low = ((v + self.half) & self.mask) - self.half
        self.win[0] = low
        self.win[1] += (v - low) >> self.w

    def finish(self) -> None:
        while self.base is not None and any(self.win):
            self._emit_one()
        self._flush()
        self.fh.close()

    def _flush(self) -> None:
        if not self.out:
            return
        recs = np.array(self.out, dtype=RECORD_DTYPE)
        try:
            recs.tofile(self.fh)
        except OSError as exc:
            raise _io(self.path, exc) from exc
        self.stats.digits_emitted += len(self.out)
        self.out = []


def _read_back_to_front(path: Path, page: int) -> DenseAccumulator:
    """Reverse pass over the digit file; carries must already be settled."""
    acc = DenseAccumulator()
    half = DEFAULT_CONFIG.radix >> 1
    try:
        size = os.path.getsize(path) // RECORD_SIZE
        with open(path, "rb") as fh:
            end = size
            prev = None
            while end > 0:
                start = max(0, end - page)
                fh.seek(start * RECORD_SIZE)
                recs = np.fromfile(fh, dtype=RECORD_DTYPE, count=end - start)
                for i, m in zip(reversed(recs["index"].tolist()), reversed(recs["mantissa"].tolist())):
                    assert prev is None or i < prev, "digit file out of order"
                    assert -half <= m < half, "unsettled carry in digit file"
                    acc.digits[i] = m
                    prev = i
                end = start
    except OSError as exc:
        raise _io(path, exc) from exc
    return acc


def sum_external(source: Source, budget: MemoryBudget, tmpdir: Union[str, os.PathLike], *,
                 stats: Optional[ExtMemStats] = None, keep_files: bool = False,
                 nonfinite: str = "raise") -> RoundedSum:
    stats = stats if stats is not None else ExtMemStats()
    stats.limit_bytes = budget.memory_bytes
    tmp = Path(tmpdir)
    if not tmp.is_dir():
        raise IoFailure(tmp, "not a directory")
    specials = _SpecialTracker(nonfinite)
    writer = _RunWriter(tmp, stats)
    created: list[Path] = []
    try:
        runs = _generate_runs(source, budget, writer, stats, specials)
        created.extend(runs)
        special = specials.result()
        if special is not None:
            return special
        fan_in = budget.fan_in
        while len(runs) > fan_in:
            merged = []
            for i in range(0, len(runs), fan_in):
                group = runs[i:i + fan_in]
                merged.append(_merge_to_file(group, budget, writer, stats))
                created.append(merged[-1])
                if not keep_files:
                    _remove(group)
            runs = merged
            stats.merge_passes += 1

        digit_path = tmp / DIGIT_FILE
        created.append(digit_path)
        scan = _WindowScan(digit_path, budget.page_records, stats)
        if runs:
            stats.merge_passes += 1
            for batch in _merge(runs, budget.page_records, stats):
                for index, total in _exact_group_sums(batch):
                    scan.fold(index, total)
        scan.finish()

        acc = _read_back_to_front(digit_path, budget.page_records)
        before = acc.digits.copy()
        acc.renormalize()
        assert (acc.digits == before).all(), "back-to-front pass found carries to propagate"
        acc.canonicalize()
        return round_to_double(acc)
    finally:
        if not keep_files:
            _remove(created)
