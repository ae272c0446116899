"""Minimal protobuf wire-format primitives.

Only what the ONNX ModelProto subset needs: varints, 32/64-bit scalars and
length-delimited fields, for both directions. Unknown fields are skippable
so files written by richer toolchains still decode.
"""

from __future__ import annotations

import struct

from .exceptions import MalformedFile

WIRE_VARINT = 0
WIRE_I64 = 1
WIRE_LEN = 2
WIRE_I32 = 5

_U64_MASK = (1 << 64) - 1


class Reader:
    """Cursor over a field-delimited byte span."""

    __slots__ = ("buf", "pos", "end")

    def __init__(self, buf: bytes, start: int = 0, end: int | None = None):
        self.buf = buf
        self.pos = start
        self.end = len(buf) if end is None else end

    def at_end(self) -> bool:
        return self.pos >= self.end

    def varint(self) -> int:
        result = 0
        shift = 0
        while True:
            if self.pos >= self.end:
                raise MalformedFile("truncated varint")
            byte = self.buf[self.pos]
            self.pos += 1
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                if shift >= 63 and result >> 64:
                    raise MalformedFile("varint wider than 64 bits")
                return result
            shift += 7
            if shift >= 70:
                raise MalformedFile("varint wider than 64 bits")

    def signed_varint(self) -> int:
        raw = self.varint()
        return raw - (1 << 64) if raw >> 63 else raw

    def tag(self) -> tuple[int, int]:
        key = self.varint()
        field, wire = key >> 3, key & 7
        if field == 0:
            raise MalformedFile("field number 0")
        return field, wire

    def delimited(self) -> bytes:
        length = self.varint()
        if self.pos + length > self.end:
            raise MalformedFile("length-delimited field overruns buffer")
        out = self.buf[self.pos : self.pos + length]
        self.pos += length
        return out

    def fixed32(self) -> bytes:
        if self.pos + 4 > self.end:
            raise MalformedFile("truncated fixed32")
        out = self.buf[self.pos : self.pos + 4]
        self.pos += 4
        return out

    def fixed64(self) -> bytes:
        if self.pos + 8 > self.end:
            raise MalformedFile("truncated fixed64")
        out = self.buf[self.pos : self.pos + 8]
        self.pos += 8
        return out

    def float32(self) -> float:
        return struct.unpack("<f", self.fixed32())[0]

    def skip(self, wire: int) -> None:
        if wire == WIRE_VARINT:
            self.varint()
        elif wire == WIRE_I64:
            self.fixed64()
        elif wire == WIRE_LEN:
            self.delimited()
        elif wire == WIRE_I32:
            self.fixed32()
        else:
            raise MalformedFile(f"unsupported wire type {wire}")


def read_packed_varints(data: bytes, signed: bool = True) -> list[int]:
    r = Reader(data)
    out = []
    while not r.at_end():
        out.append(r.signed_varint() if signed else r.varint())
    return out


def read_packed_floats(data: bytes) -> list[float]:
    if len(data) % 4:
        raise MalformedFile("packed float blob not a multiple of 4 bytes")
    return list(struct.unpack(f"<{len(data) // 4}f", data))


class Writer:
    __slots__ = ("_chunks",)

    def __init__(self):
        self._chunks: list[bytes] = []

    def getvalue(self) -> bytes:
        return b"".join(self._chunks)

    def raw(self, data: bytes) -> None:
        self._chunks.append(data)

    def varint(self, value: int) -> None:
        value &= _U64_MASK
        out = bytearray()
        while True:
            byte = value & 0x7F
            value >>= 7
            if value:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
        self._chunks.append(bytes(out))

    def tag(self, field: int, wire: int) -> None:
        self.varint((field << 3) | wire)

    def int_field(self, field: int, value: int) -> None:
        self.tag(field, WIRE_VARINT)
        self.varint(value)

    def bytes_field(self, field: int, data: bytes) -> None:
        self.tag(field, WIRE_LEN)
        self.varint(len(data))
        self.raw(data)

    def str_field(self, field: int, text: str) -> None:
        self.bytes_field(field, text.encode("utf-8"))

    def float_field(self, field: int, value: float) -> None:
        self.tag(field, WIRE_I32)
        self.raw(struct.pack("<f", value))

    def packed_varints(self, field: int, values: list[int]) -> None:
        inner = Writer()
        for v in values:
            inner.varint(v)
        self.bytes_field(field, inner.getvalue())

    def packed_floats(self, field: int, values: list[float]) -> None:
        self.bytes_field(field, struct.pack(f"<{len(values)}f", *values))

    def message_field(self, field: int, inner: "Writer") -> None:
        self.bytes_field(field, inner.getvalue())
