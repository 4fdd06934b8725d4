"""Exception hierarchy shared by every summation engine."""

from __future__ import annotations

import enum


class SuperaccError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteInput(SuperaccError, ValueError):
    def __init__(self, value: float) -> None:
        super().__init__(f"non-finite input {value!r}; use nonfinite='ieee' to propagate IEEE specials")
        self.value = value


class ConfigMismatch(SuperaccError, ValueError):
    pass


class CapacityOverflow(SuperaccError, OverflowError):
    pass


class IndexOutOfRange(SuperaccError, IndexError):
    pass


class EmptyAccumulator(SuperaccError, ValueError):
    pass


class InvalidSpec(SuperaccError, ValueError):
    pass


class BudgetTooSmall(SuperaccError, ValueError):
    pass


class MalformedInput(SuperaccError, ValueError):
    """Input bytes or text that do not parse as binary64 values."""


class IoFailure(SuperaccError, OSError):
    def __init__(self, path: object, kind: str) -> None:
        super().__init__(f"{kind}: {path}")
        self.path = path
        self.kind = kind


class DecodeErrorKind(enum.Enum):
    BAD_MAGIC = "BadMagic"
    BAD_VERSION = "BadVersion"
    WIDTH_MISMATCH = "WidthMismatch"
    TRUNCATED = "Truncated"
    UNSORTED_INDICES = "UnsortedIndices"
    UNREGULARIZED = "Unregularized"


class DecodeError(SuperaccError, ValueError):
    def __init__(self, kind: DecodeErrorKind, detail: str = "") -> None:
        super().__init__(f"{kind.value}: {detail}" if detail else kind.value)
        self.kind = kind
