"""Reading and writing value streams: raw little-endian binary64 or text."""

from __future__ import annotations

import sys
from typing import BinaryIO, Iterator

import numpy as np

from .errors import IoFailure, MalformedInput

FORMATS = ("bin", "text")
_F8 = np.dtype("<f8")


def _open_in(path: str) -> BinaryIO:
    if path == "-":
        return sys.stdin.buffer
    try:
        return open(path, "rb")
    except OSError as exc:
        raise IoFailure(path, exc.strerror or type(exc).__name__) from exc


def iter_value_blocks(path: str, fmt: str, block: int = 1 << 16) -> Iterator[np.ndarray]:
    fh = _open_in(path)
    try:
        if fmt == "bin":
            while True:
                data = fh.read(block * 8)
                if not data:
                    return
                if len(data) % 8:
                    # a short read from a pipe may split a value; top up once
                    rest = fh.read(8 - len(data) % 8)
                    data += rest
                    if len(data) % 8:
                        raise MalformedInput(f"{path}: binary64 stream length is not a multiple of 8")
                yield np.frombuffer(data, dtype=_F8).astype(np.float64)
        elif fmt == "text":
            buf: list[float] = []
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    buf.append(float(line))
                except ValueError:
                    raise MalformedInput(f"{path}: not a number: {line[:40].decode(errors='replace')!r}") from None
                if len(buf) == block:
                    yield np.array(buf, dtype=np.float64)
                    buf = []
            if buf:
                yield np.array(buf, dtype=np.float64)
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except IoFailure:
        raise
    except OSError as exc:
        raise IoFailure(path, exc.strerror or type(exc).__name__) from exc
    finally:
        if fh is not sys.stdin.buffer:
            fh.close()


def read_values(path: str, fmt: str) -> np.ndarray:
    blocks = list(iter_value_blocks(path, fmt))
    return np.concatenate(blocks) if blocks else np.empty(0, dtype=np.float64)


def write_values(xs: np.ndarray, path: str, fmt: str) -> None:
    try:
        fh = sys.stdout.buffer if path == "-" else open(path, "wb")
        try:
            if fmt == "bin":
                fh.write(np.asarray(xs, dtype=_F8).tobytes())
            elif fmt == "text":
                fh.write("".join(f"{x!r}\n" for x in np.asarray(xs, dtype=np.float64).tolist()).encode())
            else:
                raise ValueError(f"unknown format {fmt!r}")
            fh.flush()
        finally:
            if path != "-":
                fh.close()
    except IoFailure:
        raise
    except OSError as exc:
        raise IoFailure(path, exc.strerror or type(exc).__name__) from exc
