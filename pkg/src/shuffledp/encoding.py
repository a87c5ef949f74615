"""Canonical self-delimiting encoding for protocol messages.

A message is one tag byte followed by a sequence of encoded fields. Each
field is ``type byte | LEB128 length | payload``:

====  =========================================================
type  payload
====  =========================================================
0x01  non-negative int, minimal big-endian (zero is empty)
0x02  negative int, magnitude as above (never zero)
0x03  raw bytes
0x04  UTF-8 text
0x05  tuple; length counts items, payload is the encoded items
0x06  None (length 0)
====  =========================================================

Lengths and integers must be minimal, so every value has exactly one
encoding and ``encode(decode(b)) == b`` for every accepted ``b``.
Lexicographic order of the resulting byte strings is what the shuffle
channel sorts by.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Any

Message = bytes

_T_UINT = 0x01
_T_NINT = 0x02
_T_BYTES = 0x03
_T_STR = 0x04
_T_TUPLE = 0x05
_T_NONE = 0x06


class Tag(IntEnum):
    """One-byte message kinds. Values are part of the wire format."""

    BOTTOM = 0x00
    BIT = 0x01
    KEY_BIT = 0x10
    SMT_CIPHER = 0x11
    SHARE = 0x20
    VECTOR = 0x21
    LDP_BIT = 0x30
    CLEAR = 0x31
    ELEMENT = 0x40
    RECORD = 0x50
    VIEW = 0x51


class EncodingError(ValueError):
    pass


def _uvarint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _read_uvarint(buf: bytes, pos: int) -> tuple[int, int]:
    shift = 0
    value = 0
    start = pos
    while True:
        if pos >= len(buf):
            raise EncodingError("truncated length")
        byte = buf[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            break
    if pos - start > 1 and buf[pos - 1] == 0:
        raise EncodingError("non-minimal length")
    return value, pos


def _int_bytes(n: int) -> bytes:
    return n.to_bytes((n.bit_length() + 7) // 8, "big")


def encode_value(value: Any) -> bytes:
    """Encode a single field value."""
    if value is None:
        return bytes([_T_NONE, 0])
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        if value >= 0:
            body = _int_bytes(value)
            return bytes([_T_UINT]) + _uvarint(len(body)) + body
        body = _int_bytes(-value)
        return bytes([_T_NINT]) + _uvarint(len(body)) + body
    if isinstance(value, (bytes, bytearray)):
        return bytes([_T_BYTES]) + _uvarint(len(value)) + bytes(value)
    if isinstance(value, str):
        body = value.encode("utf-8")
        return bytes([_T_STR]) + _uvarint(len(body)) + body
    if isinstance(value, (tuple, list)):
        return bytes([_T_TUPLE]) + _uvarint(len(value)) + b"".join(encode_value(v) for v in value)
    # numpy integer scalars and similar
    if hasattr(value, "__index__"):
        return encode_value(int(value))
    raise EncodingError(f"cannot encode value of type {type(value).__name__}")


def _decode_value(buf: bytes, pos: int) -> tuple[Any, int]:
    if pos >= len(buf):
        raise EncodingError("truncated field")
    kind = buf[pos]
    length, pos = _read_uvarint(buf, pos + 1)
    if kind == _T_TUPLE:
        items = []
        for _ in range(length):
            item, pos = _decode_value(buf, pos)
            items.append(item)
        return tuple(items), pos
    end = pos + length
    if end > len(buf):
        raise EncodingError("truncated payload")
    body = buf[pos:end]
    if kind in (_T_UINT, _T_NINT):
        if body[:1] == b"\x00":
            raise EncodingError("non-minimal integer")
        n = int.from_bytes(body, "big")
        if kind == _T_NINT:
            if n == 0:
                raise EncodingError("negative zero")
            n = -n
        return n, end
    if kind == _T_BYTES:
        return bytes(body), end
    if kind == _T_STR:
        try:
            return body.decode("utf-8"), end
        except UnicodeDecodeError as exc:
            raise EncodingError("invalid utf-8") from exc
    if kind == _T_NONE:
        if length:
            raise EncodingError("None with payload")
        return None, end
    raise EncodingError(f"unknown field type 0x{kind:02x}")


def encode_message(tag: int, *fields: Any) -> Message:
    if not 0 <= int(tag) <= 0xFF:
        raise EncodingError("tag must fit in one byte")
    return bytes([int(tag)]) + b"".join(encode_value(f) for f in fields)


def decode_message(buf: bytes) -> tuple[int, tuple[Any, ...]]:
    if not buf:
        raise EncodingError("empty message")
    pos = 1
    fields = []
    while pos < len(buf):
        value, pos = _decode_value(buf, pos)
        fields.append(value)
    return buf[0], tuple(fields)


def encode_tuple(values: Any) -> bytes:
    """Standalone canonical encoding of a (possibly nested) tuple."""
    return encode_value(tuple(values))


def decode_tuple(buf: bytes) -> tuple[Any, ...]:
    value, pos = _decode_value(buf, 0)
    if pos != len(buf) or not isinstance(value, tuple):
        raise EncodingError("not a single encoded tuple")
    return value


BOTTOM: Message = encode_message(Tag.BOTTOM)


def is_bottom(msg: Message) -> bool:
    return msg == BOTTOM
