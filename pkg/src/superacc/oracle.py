"""Ground truth and baselines.

The oracle never touches the superaccumulator code: it folds every input
into one Python integer scaled by ``2**1074`` and rounds with a 54-bit window
plus sticky bit.  ``grouped_sum`` is a second, structurally different exact
method used to cross-check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

from .core import Direction, RoundedSum
from .errors import NonFiniteInput

SCALE_BITS = 1074


def _as_floats(xs: Iterable[float]) -> Iterator[float]:
    if hasattr(xs, "tolist"):
        flat = xs.ravel()
        for i in range(0, flat.size, 1 << 20):
            yield from flat[i:i + (1 << 20)].tolist()
    else:
        for x in xs:
            yield float(x)


@dataclass(frozen=True)
class ExactFixedPoint:
    """Exact sum held as an integer multiple of ``2**-1074``."""

    scaled: int

    @classmethod
    def from_values(cls, xs: Iterable[float]) -> ExactFixedPoint:
        total = 0
        for x in _as_floats(xs):
            if not math.isfinite(x):
                raise NonFiniteInput(x)
            num, den = x.as_integer_ratio()
            total += num << (SCALE_BITS - den.bit_length() + 1)
        return cls(total)

    def __add__(self, other: ExactFixedPoint) -> ExactFixedPoint:
        return ExactFixedPoint(self.scaled + other.scaled)

    def __neg__(self) -> ExactFixedPoint:
        return ExactFixedPoint(-self.scaled)

    def as_fraction(self) -> Fraction:
        return Fraction(self.scaled, 1 << SCALE_BITS)

    def rounded(self) -> RoundedSum:
        mag = abs(self.scaled)
        negative = self.scaled < 0
        if mag == 0:
            return RoundedSum(0.0, True, Direction.EXACT, None)
        length = mag.bit_length()
        msd = length - 1 - SCALE_BITS
        if length <= 53:
            value = math.ldexp(float(mag), -SCALE_BITS)
            return RoundedSum(-value if negative else value, True, Direction.EXACT, msd)
        shift = length - 54
        window = mag >> shift
        sticky = mag & ((1 << shift) - 1) != 0
        round_bit = window & 1
        q = window >> 1
        up = bool(round_bit and (sticky or q & 1))
        q += up
        try:
            value = math.ldexp(float(q), shift + 1 - SCALE_BITS)
        except OverflowError:
            value, up = math.inf, True
        exact = not (round_bit or sticky) and math.isfinite(value)
        if exact:
            direction = Direction.EXACT
        elif up != negative:
            direction = Direction.ROUNDED_UP
        else:
            direction = Direction.ROUNDED_DOWN
        return RoundedSum(-value if negative else value, exact, direction, msd)


def oracle_sum(xs: Iterable[float]) -> RoundedSum:
    return ExactFixedPoint.from_values(xs).rounded()


def grouped_sum(xs: Iterable[float]) -> float:
    """Correctly rounded sum via per-exponent integer groups.

    Values are bucketed by binary exponent, each bucket's integer significands
    are summed, and buckets are combined in ascending exponent order as exact
    rationals.  Rounding is CPython's correctly rounded int/int division.
    """
    groups: dict[int, int] = {}
    for x in _as_floats(xs):
        if not math.isfinite(x):
            raise NonFiniteInput(x)
        if x == 0:
            continue
        m, e = math.frexp(x)
        groups[e] = groups.get(e, 0) + int(m * (1 << 53))
    total = Fraction(0)
    for e in sorted(groups):
        total += Fraction(groups[e]) * Fraction(2) ** (e - 53)
    if total == 0:
        return 0.0
    try:
        return float(total)
    except OverflowError:
        return math.inf if total > 0 else -math.inf


def naive_sum(xs: Iterable[float]) -> float:
    s = 0.0
    for x in _as_floats(xs):
        s += x
    return s


def two_sum(a: float, b: float) -> tuple[float, float]:
    """Knuth's error-free addition: ``a + b == s + e`` exactly."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def compensated_sum(xs: Iterable[float]) -> float:
    s = 0.0
    c = 0.0
    for x in _as_floats(xs):
        s, e = two_sum(s, x)
        c += e
    return s + c
