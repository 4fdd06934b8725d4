"""Sparse and gamma-truncated superaccumulators.

Only active indices are stored, as a tuple of ``Digit`` sorted by index.  An
index stays active once touched even if its mantissa cancels to zero; the
truncated driver's stopping bound relies on that.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import DEFAULT_CONFIG, DenseAccumulator, Digit, RadixConfig, decompose
from .errors import CapacityOverflow, ConfigMismatch, EmptyAccumulator, IndexOutOfRange


@dataclass(frozen=True)
class SparseAccumulator:
    config: RadixConfig = DEFAULT_CONFIG
    digits: tuple[Digit, ...] = ()
    gamma: Optional[int] = None
    truncated_any: bool = False

    def __post_init__(self) -> None:
        if self.gamma is not None and self.gamma < 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")

    @property
    def min_kept_index(self) -> Optional[int]:
        return self.digits[0].index if self.digits else None

    def to_int(self) -> int:
        """Exact value of the retained digits in units of ``2**min_bit``."""
        w = self.config.width
        return sum(m << (i * w) for i, m in self.digits)

    def truncate(self, gamma: Optional[int]) -> SparseAccumulator:
        if gamma is None or len(self.digits) <= gamma:
            return replace(self, gamma=gamma)
        return replace(self, digits=self.digits[-gamma:], gamma=gamma, truncated_any=True)


def from_double(x: float, config: RadixConfig = DEFAULT_CONFIG, gamma: Optional[int] = None) -> SparseAccumulator:
    return SparseAccumulator(config, tuple(decompose(x, config))).truncate(gamma)


def from_dense(acc: DenseAccumulator, gamma: Optional[int] = None,
               active: Optional[np.ndarray] = None) -> SparseAccumulator:
    """Sparse view of a regularized dense accumulator.

    ``active`` optionally marks extra indices to keep even when zero.
    """
    if not acc.is_regularized():
        raise ValueError("from_dense needs a regularized accumulator; renormalize first")
    keep = acc.digits != 0
    if active is not None:
        keep |= active
    idx = np.flatnonzero(keep)
    digits = tuple(Digit(i, m) for i, m in zip(idx.tolist(), acc.digits[idx].tolist()))
    return SparseAccumulator(acc.config, digits).truncate(gamma)


def to_dense(s: SparseAccumulator) -> DenseAccumulator:
    acc = DenseAccumulator(s.config)
    n = s.config.digit_count
    for i, m in s.digits:
        if not 0 <= i < n:
            raise IndexOutOfRange(f"digit index {i} outside [0, {n})")
        acc.digits[i] = m
    return acc


def _combined_gamma(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def merge_add(a: SparseAccumulator, b: SparseAccumulator) -> SparseAccumulator:
    """Sum two regularized sparse accumulators.

    Indices are merged in one two-pointer pass; each position's signed carry
    lands on the next index, inserting a new digit there if it was inactive.
    Truncation, if any, happens once the whole sum is formed.
    """
    if a.config != b.config:
        raise ConfigMismatch(f"{a.config} != {b.config}")
    cfg = a.config
    r = cfg.radix
    da, db = a.digits, b.digits
    merged: list[tuple[int, int]] = []
    i = j = 0
    while i < len(da) and j < len(db):
        ia, ib = da[i].index, db[j].index
        if ia == ib:
            merged.append((ia, da[i].mantissa + db[j].mantissa))
            i += 1
            j += 1
        elif ia < ib:
            merged.append(da[i])
            i += 1
        else:
            merged.append(db[j])
            j += 1
    merged.extend(da[i:])
    merged.extend(db[j:])

    out: list[Digit] = []
    carry = 0
    prev = -2
    for index, p in merged:
        if carry and index != prev + 1:
            out.append(Digit(prev + 1, carry))
            carry = 0
        c = 1 if p >= r - 1 else (-1 if p <= 1 - r else 0)
        out.append(Digit(index, p - c * r + carry))
        carry = c
        prev = index
    if carry:
        if prev + 1 >= cfg.digit_count:
            raise CapacityOverflow("carry out of the most significant digit")
        out.append(Digit(prev + 1, carry))

    result = SparseAccumulator(cfg, tuple(out), None, a.truncated_any or b.truncated_any)
    return result.truncate(_combined_gamma(a.gamma, b.gamma))


def least_kept_exponent(s: SparseAccumulator) -> int:
    """Bit exponent of the least significant retained digit."""
    if not s.digits:
        raise EmptyAccumulator("accumulator has no digits")
    return s.config.exponent(s.digits[0].index)
