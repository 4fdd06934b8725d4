"""Reproducible test distributions with a bounded exponent range.

Four families: all positive, mixed sign, ill-conditioned
(mean-subtracted), and exact sum zero.  Every random bit comes from raw
PCG64 output, so a spec always yields the same byte sequence.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec
from .oracle import ExactFixedPoint, SCALE_BITS

MAX_DELTA = 2046
# Largest unbiased exponent drawn; leaves 2**23 summands of headroom before overflow.
EXPONENT_CEILING = 1000
# Values are drawn in blocks so memory stays flat for large n.  Each value
# consumes two consecutive raw words (significand, then exponent/sign), so a
# shorter dataset is a prefix of a longer one with the same seed.
BLOCK = 1 << 20


class Kind(enum.IntEnum):
    POSITIVE = 1
    MIXED = 2
    ILL_CONDITIONED = 3
    SUM_ZERO = 4


@dataclass(frozen=True)
class DatasetSpec:
    kind: Kind
    n: int
    delta: int = 2000
    seed: int = 0
    mantissa_bits: int = 52  # 0 gives significands of exactly 1

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", Kind(self.kind))
        except ValueError:
            raise InvalidSpec(f"kind must be 1-4, got {self.kind}") from None
        if self.n < 1:
            raise InvalidSpec(f"n must be >= 1, got {self.n}")
        if not 0 <= self.delta <= MAX_DELTA:
            raise InvalidSpec(f"delta must be in [0, {MAX_DELTA}], got {self.delta}")
        if not 0 <= self.seed < 1 << 64:
            raise InvalidSpec(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0 <= self.mantissa_bits <= 52:
            raise InvalidSpec(f"mantissa_bits must be in [0, 52], got {self.mantissa_bits}")

    @property
    def exponent_floor(self) -> int:
        """Smallest unbiased exponent; values start at 1.0 unless delta is wide."""
        return min(0, EXPONENT_CEILING - self.delta)


def _random_values(spec: DatasetSpec, n: int, rng: np.random.Generator, signed: bool) -> np.ndarray:
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, BLOCK):
        stop = min(n, start + BLOCK)
        out[start:stop] = _random_block(spec, stop - start, rng, signed)
    return out


def _random_block(spec: DatasetSpec, n: int, rng: np.random.Generator, signed: bool) -> np.ndarray:
    raw = rng.bit_generator.random_raw(2 * n)
    raw_sig, raw_exp = raw[0::2], raw[1::2]
    if spec.mantissa_bits:
        frac = (raw_sig >> np.uint64(64 - spec.mantissa_bits)) << np.uint64(52 - spec.mantissa_bits)
    else:
        frac = np.zeros(n, dtype=np.uint64)
    significand = 1.0 + np.ldexp(frac.astype(np.float64), -52)
    span = np.uint64(max(spec.delta, 1))
    exponent = ((raw_exp >> np.uint64(32)) * span) >> np.uint64(32)
    values = np.ldexp(significand, exponent.astype(np.int64) + spec.exponent_floor)
    if signed:
        values = np.where(raw_exp & np.uint64(1), -values, values)
    return values


def generate(spec: DatasetSpec) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.kind is Kind.POSITIVE:
        return _random_values(spec, spec.n, rng, signed=False)
    if spec.kind is Kind.MIXED:
        return _random_values(spec, spec.n, rng, signed=True)
    if spec.kind is Kind.ILL_CONDITIONED:
        base = _random_values(spec, spec.n, rng, signed=True)
        mean = ExactFixedPoint.from_values(base).scaled / (spec.n << SCALE_BITS)
        return base - mean
    half = _random_values(spec, spec.n // 2, rng, signed=True)
    paired = np.concatenate([half, -half])
    order = np.argsort(rng.bit_generator.random_raw(paired.size), kind="stable")
    paired = paired[order]
    if spec.n % 2:
        paired = np.append(paired, 0.0)
    return paired
