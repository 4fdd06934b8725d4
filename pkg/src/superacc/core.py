"""Dense (alpha, beta)-regularized superaccumulator for binary64 inputs.

A value is held as digits ``Y_i`` with weight ``2**(i*w + min_bit)``.  Digits
live in native 64-bit integers; between renormalizations they may grow past
the radix ("raw" state), bounded by the raw-add counter.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .errors import CapacityOverflow, ConfigMismatch, NonFiniteInput

MIN_BIT = -1074
MAX_BIT = 1024  # exclusive: 2**1024 overflows binary64
CARRY_HEADROOM = 64

_FRAC_BITS = 52
_FRAC_MASK = (1 << _FRAC_BITS) - 1
_HIDDEN = 1 << _FRAC_BITS


@dataclass(frozen=True)
class RadixConfig:
    """Digit layout: radix ``2**width`` anchored at bit ``min_bit``."""

    width: int = 51
    min_bit: int = MIN_BIT

    def __post_init__(self) -> None:
        if not 2 <= self.width <= 60:
            raise ValueError(f"digit width must be in [2, 60], got {self.width}")
        if self.min_bit > MIN_BIT:
            raise ValueError(f"min_bit must be <= {MIN_BIT} to hold every binary64")

    @property
    def radix(self) -> int:
        return 1 << self.width

    @property
    def alpha(self) -> int:
        return self.radix - 1

    beta = alpha

    @property
    def mask(self) -> int:
        return self.radix - 1

    @property
    def digit_count(self) -> int:
        # one spare digit above the headroom so a pairwise carry never leaves the array
        return -(-(MAX_BIT - self.min_bit + CARRY_HEADROOM) // self.width) + 1

    @property
    def k_max(self) -> int:
        """Raw adds allowed before digits risk leaving +-2**62."""
        return (1 << (62 - self.width)) - 2

    @property
    def pieces(self) -> int:
        """Maximum number of digits a single binary64 splits into."""
        return -(-(_FRAC_BITS + self.width) // self.width)

    def exponent(self, index: int) -> int:
        return index * self.width + self.min_bit


DEFAULT_CONFIG = RadixConfig()


class Digit(NamedTuple):
    index: int
    mantissa: int


class Direction(enum.Enum):
    EXACT = "Exact"
    ROUNDED_DOWN = "RoundedDown"
    ROUNDED_UP = "RoundedUp"


@dataclass(frozen=True)
class RoundedSum:
    value: float
    exact: bool
    direction: Direction
    msd_exponent: Optional[int]  # None when the exact sum is zero

    @property
    def bits(self) -> int:
        return float_to_bits(self.value)

    @property
    def hex(self) -> str:
        return f"0x{self.bits:016x}"


def float_to_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def bits_to_float(bits: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", bits))[0]


def ieee_special_sum(xs: Iterable[float]) -> Optional[float]:
    """IEEE result of a sum containing NaN or infinities, else None."""
    arr = np.asarray(xs, dtype=np.float64)
    bad = ~np.isfinite(arr)
    if not bad.any():
        return None
    specials = arr[bad]
    if np.isnan(specials).any():
        return math.nan
    pos = bool((specials > 0).any())
    neg = bool((specials < 0).any())
    if pos and neg:
        return math.nan
    return math.inf if pos else -math.inf


def special_result(value: float) -> RoundedSum:
    return RoundedSum(value, True, Direction.EXACT, None)


def check_finite(xs: np.ndarray) -> None:
    if not np.isfinite(xs).all():
        raise NonFiniteInput(float(xs[~np.isfinite(xs)][0]))


def _split(x: float, config: RadixConfig) -> tuple[bool, int, int]:
    """Return (negative, integer significand, bit offset above min_bit)."""
    bits = float_to_bits(x)
    biased = (bits >> 52) & 0x7FF
    frac = bits & _FRAC_MASK
    if biased:
        sig, lsb = frac | _HIDDEN, biased - 1075
    else:
        sig, lsb = frac, MIN_BIT
    return bool(bits >> 63), sig, lsb - config.min_bit


def decompose(x: float, config: RadixConfig = DEFAULT_CONFIG) -> list[Digit]:
    """Split a finite double into regularized digits that sum to it exactly."""
    if not math.isfinite(x):
        raise NonFiniteInput(x)
    if x == 0:
        return []
    neg, sig, shift = _split(x, config)
    index, offset = divmod(shift, config.width)
    v = sig << offset
    out = []
    while v:
        d = v & config.mask
        if d:
            out.append(Digit(index, -d if neg else d))
        v >>= config.width
        index += 1
    return out


def decompose_array(xs: np.ndarray, config: RadixConfig = DEFAULT_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``decompose``.

    Returns ``(indices, mantissas)``, both int64 of shape ``(config.pieces, n)``.
    Slots that carry no bits hold mantissa 0.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    check_finite(xs)
    bits = xs.view(np.uint64)
    biased = ((bits >> np.uint64(52)) & np.uint64(0x7FF)).astype(np.int64)
    sig = bits & np.uint64(_FRAC_MASK)
    normal = biased != 0
    sig = np.where(normal, sig | np.uint64(_HIDDEN), sig)
    shift = np.where(normal, biased - 1, 0) + (MIN_BIT - config.min_bit)
    index0, offset = np.divmod(shift, config.width)
    neg = (bits >> np.uint64(63)).astype(bool)
    mask = np.uint64(config.mask)
    w = config.width
    idx = np.empty((config.pieces, xs.size), dtype=np.int64)
    mant = np.empty((config.pieces, xs.size), dtype=np.int64)
    for k in range(config.pieces):
        s = k * w - offset
        right = sig >> np.clip(s, 0, 63).astype(np.uint64)
        left = sig << np.clip(-s, 0, 63).astype(np.uint64)
        piece = (np.where(s >= 0, right, left) & mask).astype(np.int64)
        mant[k] = np.where(neg, -piece, piece)
        idx[k] = index0 + k
    return idx, mant


class DenseAccumulator:
    """Fixed-size digit array covering the whole binary64 range.

    ``digits[i]`` holds ``Y_i``; ``raw_adds`` counts scalar additions since the
    last renormalization and never exceeds ``config.k_max``.
    """

    __slots__ = ("config", "digits", "raw_adds")

    def __init__(self, config: RadixConfig = DEFAULT_CONFIG, digits: Optional[np.ndarray] = None,
                 raw_adds: int = 0) -> None:
        self.config = config
        if digits is None:
            digits = np.zeros(config.digit_count, dtype=np.int64)
        elif len(digits) != config.digit_count:
            raise ValueError(f"expected {config.digit_count} digits, got {len(digits)}")
        self.digits = np.array(digits, dtype=np.int64)
        self.raw_adds = raw_adds

    def copy(self) -> DenseAccumulator:
        return DenseAccumulator(self.config, self.digits.copy(), self.raw_adds)

    def __repr__(self) -> str:
        nz = {i: int(d) for i, d in enumerate(self.digits) if d}
        return f"DenseAccumulator(width={self.config.width}, digits={nz}, raw_adds={self.raw_adds})"

    def to_int(self) -> int:
        """Exact represented value in units of ``2**min_bit``."""
        w = self.config.width
        total = 0
        for d in reversed(self.digits.tolist()):
            total = (total << w) + d
        return total

    def is_regularized(self) -> bool:
        return int(np.abs(self.digits).max(initial=0)) <= self.config.alpha

    def add_scalar(self, x: float) -> None:
        parts = decompose(x, self.config)
        if self.raw_adds + 1 > self.config.k_max:
            self.renormalize()
        for index, mantissa in parts:
            self.digits[index] += mantissa
        self.raw_adds += 1

    def add_many(self, xs: np.ndarray) -> None:
        """Same effect as ``add_scalar`` on every element, vectorized.

        Elements are folded in batches that never push ``raw_adds`` past
        ``k_max``, so the raw-digit bound of the scalar path still holds.
        """
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        check_finite(xs)
        k_max = self.config.k_max
        pos = 0
        while pos < xs.size:
            room = k_max - self.raw_adds
            if room <= 0:
                self.renormalize()
                continue
            batch = xs[pos:pos + room]
            idx, mant = decompose_array(batch, self.config)
            np.add.at(self.digits, idx.ravel(), mant.ravel())
            self.raw_adds += batch.size
            pos += batch.size

    def renormalize(self) -> None:
        """Propagate signed carries so every digit lies in [-R/2, R/2 - 1]."""
        w = self.config.width
        half = self.config.radix >> 1
        mask = self.config.mask
        ds = self.digits.tolist()
        carry = 0
        for i, d in enumerate(ds):
            t = d + carry
            low = ((t + half) & mask) - half
            carry = (t - low) >> w
            ds[i] = low
        if carry:
            raise CapacityOverflow("carry out of the most significant digit")
        self.digits[:] = ds
        self.raw_adds = 0

    def canonicalize(self) -> None:
        """Rewrite digits so all nonzero digits share the sign of the total."""
        if not self.is_regularized():
            raise ValueError("canonicalize needs regularized digits; renormalize first")
        ds = self.digits.tolist()
        top = next((d for d in reversed(ds) if d), 0)
        if top == 0:
            return
        r = self.config.radix
        carry = 0
        for i, d in enumerate(ds):
            t = d + carry
            if top > 0:
                low = t % r
            else:
                low = -((-t) % r)
            carry = (t - low) // r
            ds[i] = low
        assert carry == 0
        self.digits[:] = ds

    def rounded(self) -> RoundedSum:
        """Correctly rounded value; leaves ``self`` untouched."""
        acc = self.copy()
        acc.renormalize()
        acc.canonicalize()
        return round_to_double(acc)


def add_accumulators(a: DenseAccumulator, b: DenseAccumulator) -> DenseAccumulator:
    """Carry-free sum of two regularized accumulators.

    Each position emits a signed carry in {-1, 0, 1} into its upper neighbour
    only, so every output digit depends on two input positions.
    """
    if a.config != b.config:
        raise ConfigMismatch(f"{a.config} != {b.config}")
    if not (a.is_regularized() and b.is_regularized()):
        raise ValueError("add_accumulators needs regularized inputs")
    r = a.config.radix
    p = a.digits + b.digits
    carry = (p >= r - 1).astype(np.int64) - (p <= 1 - r).astype(np.int64)
    if carry[-1]:
        raise CapacityOverflow("carry out of the most significant digit")
    s = p - carry * r
    s[1:] += carry[:-1]
    return DenseAccumulator(a.config, s)


def round_scaled(mag: int, scale: int, sticky: bool = False, negative: bool = False) -> RoundedSum:
    """Round ``(mag + sticky_fraction) * 2**scale`` to nearest-even binary64.

    ``mag`` is a non-negative integer.  ``sticky`` stands for a nonzero
    remainder strictly below ``2**scale``; the caller must supply at least two
    bits below the rounding position whenever ``sticky`` is set.
    """
    if mag == 0:
        assert not sticky
        return RoundedSum(0.0, True, Direction.EXACT, None)
    top = mag.bit_length() - 1 + scale
    lsb = max(top - _FRAC_BITS, MIN_BIT)
    shift = lsb - scale
    if shift <= 0:
        assert not sticky, "sticky bits below a representable window"
        q, inexact, up = mag << -shift, False, False
    else:
        assert not sticky or shift >= 2
        q = mag >> shift
        rem = mag & ((1 << shift) - 1)
        half = 1 << (shift - 1)
        inexact = rem != 0 or sticky
        up = rem > half or (rem == half and (sticky or q & 1 == 1))
        if up:
            q += 1
            if q == 1 << (_FRAC_BITS + 1):
                q >>= 1
                lsb += 1
    try:
        value = math.ldexp(float(q), lsb)
    except OverflowError:
        value, inexact, up = math.inf, True, True
    if negative:
        value = -value
    if not inexact:
        direction = Direction.EXACT
    elif up != negative:
        direction = Direction.ROUNDED_UP
    else:
        direction = Direction.ROUNDED_DOWN
    return RoundedSum(value, not inexact, direction, top)


def round_int(value: int, config: RadixConfig = DEFAULT_CONFIG) -> RoundedSum:
    """Correctly round an exact integer count of ``2**min_bit`` units."""
    return round_scaled(abs(value), config.min_bit, negative=value < 0)


def round_to_double(acc: DenseAccumulator) -> RoundedSum:
    """Round a canonical accumulator to nearest-even binary64.

    Only the most significant nonzero digit and enough neighbours below it to
    cover 55 bits are combined; every lower digit contributes a sticky bit.
    Exact zero gives +0.0.
    """
    cfg = acc.config
    ds = acc.digits.tolist()
    k = next((i for i in range(len(ds) - 1, -1, -1) if ds[i]), None)
    if k is None:
        return RoundedSum(0.0, True, Direction.EXACT, None)
    negative = ds[k] < 0
    if any((d < 0) != negative for d in ds if d) or any(abs(d) > cfg.alpha for d in ds):
        raise ValueError("round_to_double needs a canonical accumulator")
    window = 1 + -(-55 // cfg.width)
    lo = max(k - window + 1, 0)
    mag = 0
    for i in range(k, lo - 1, -1):
        mag = (mag << cfg.width) | abs(ds[i])
    sticky = any(ds[:lo])
    return round_scaled(mag, cfg.exponent(lo), sticky, negative)
