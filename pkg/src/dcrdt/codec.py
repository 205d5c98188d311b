"""Low-level pieces of the canonical binary encoding.

Every unsigned integer is 8 bytes little-endian. Strings and byte blobs are
length-prefixed with such an integer. Collections are written as an element
count followed by the elements in ascending order; callers are responsible for
sorting before writing.
"""

from __future__ import annotations

import struct

_U64 = struct.Struct("<Q")


class DecodeError(ValueError):
    """Raised when a byte string is not a valid canonical encoding."""


def u64(n: int) -> bytes:
    return _U64.pack(n)


def rid(replica: str) -> bytes:
    raw = replica.encode("utf-8")
    return _U64.pack(len(raw)) + raw


def blob(data: bytes) -> bytes:
    return _U64.pack(len(data)) + data


class Reader:
    """Sequential reader over an encoded buffer."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos}")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def byte(self) -> int:
        return self.take(1)[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def rid(self) -> str:
        n = self.u64()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("replica id is not UTF-8") from exc

    def blob(self) -> bytes:
        return self.take(self.u64())

    def done(self) -> bool:
        return self.pos == len(self.data)

    def expect_end(self) -> None:
        if not self.done():
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")
