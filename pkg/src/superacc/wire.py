"""Byte layout for sparse accumulators crossing a shuffle boundary.

All fields little-endian::

    offset  size  field
    0       4     magic b"SSAC"
    4       1     version (1)
    5       1     digit width in bits
    6       2     flags, reserved, written as 0
    8       4     record count (unsigned)
    12      12*k  records: int32 index, int64 mantissa, ascending index

The same 12-byte record is used for external-memory run files.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import DEFAULT_CONFIG, Digit, RadixConfig
from .errors import DecodeError, DecodeErrorKind
from .sparse import SparseAccumulator

MAGIC = b"SSAC"
VERSION = 1
HEADER = struct.Struct("<4sBBHI")
RECORD_DTYPE = np.dtype([("index", "<i4"), ("mantissa", "<i8")])
RECORD_SIZE = RECORD_DTYPE.itemsize

assert HEADER.size == 12 and RECORD_SIZE == 12


def encode(s: SparseAccumulator) -> bytes:
    records = np.empty(len(s.digits), dtype=RECORD_DTYPE)
    if s.digits:
        records["index"], records["mantissa"] = zip(*s.digits)
    return HEADER.pack(MAGIC, VERSION, s.config.width, 0, len(s.digits)) + records.tobytes()


def decode(data: bytes, config: RadixConfig = DEFAULT_CONFIG) -> SparseAccumulator:
    if len(data) < HEADER.size:
        raise DecodeError(DecodeErrorKind.TRUNCATED, f"{len(data)} bytes, header needs {HEADER.size}")
    magic, version, width, _flags, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(DecodeErrorKind.BAD_MAGIC, repr(magic))
    if version != VERSION:
        raise DecodeError(DecodeErrorKind.BAD_VERSION, str(version))
    if width != config.width:
        raise DecodeError(DecodeErrorKind.WIDTH_MISMATCH, f"payload width {width}, expected {config.width}")
    expected = HEADER.size + count * RECORD_SIZE
    if len(data) != expected:
        raise DecodeError(DecodeErrorKind.TRUNCATED, f"expected {expected} bytes, got {len(data)}")
    records = np.frombuffer(data, dtype=RECORD_DTYPE, offset=HEADER.size, count=count)
    index = records["index"]
    mantissa = records["mantissa"]
    if count > 1 and not (np.diff(index) > 0).all():
        raise DecodeError(DecodeErrorKind.UNSORTED_INDICES)
    if count and int(np.abs(mantissa).max()) > config.alpha:
        raise DecodeError(DecodeErrorKind.UNREGULARIZED)
    digits = tuple(Digit(i, m) for i, m in zip(index.tolist(), mantissa.tolist()))
    return SparseAccumulator(config, digits)
