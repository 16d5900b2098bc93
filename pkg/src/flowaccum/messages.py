"""Wire format of the two producer/consumer payloads.

Every message is a 13-byte envelope followed by the packed payload::

    uint32 row | uint32 col | uint8 kind | uint32 payload_length   (little-endian)

A perimeter payload (kind 1) is ``P`` direction bytes, ``P`` float64
accumulations, then ``P`` uint16 links: ``11 * P`` bytes.  An offset payload
(kind 2) is ``P`` float64 offsets: ``8 * P`` bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError

ENVELOPE = struct.Struct("<IIBI")
ENVELOPE_SIZE = ENVELOPE.size

KIND_PERIMETER = 1
KIND_OFFSET = 2

PERIMETER_BYTES_PER_CELL = 1 + 8 + 2
OFFSET_BYTES_PER_CELL = 8


@dataclass
class PerimeterPayload:
    F: np.ndarray
    A: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        self.F = np.ascontiguousarray(self.F, dtype=np.uint8)
        self.A = np.ascontiguousarray(self.A, dtype="<f8")
        self.L = np.ascontiguousarray(self.L, dtype="<u2")
        if not (self.F.ndim == self.A.ndim == self.L.ndim == 1) or not (
            self.F.size == self.A.size == self.L.size
        ):
            raise ProtocolError("perimeter arrays must be 1-D and of equal length")

    def __len__(self):
        return self.F.size

    @property
    def nbytes(self) -> int:
        return len(self) * PERIMETER_BYTES_PER_CELL

    def to_bytes(self) -> bytes:
        return self.F.tobytes() + self.A.tobytes() + self.L.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "PerimeterPayload":
        if len(buf) % PERIMETER_BYTES_PER_CELL:
            raise ProtocolError(f"perimeter payload of {len(buf)} bytes is not a multiple of 11")
        P = len(buf) // PERIMETER_BYTES_PER_CELL
        F = np.frombuffer(buf, dtype=np.uint8, count=P, offset=0)
        A = np.frombuffer(buf, dtype="<f8", count=P, offset=P)
        L = np.frombuffer(buf, dtype="<u2", count=P, offset=9 * P)
        return cls(F=F, A=A, L=L)


@dataclass
class OffsetPayload:
    offsets: np.ndarray

    def __post_init__(self):
        self.offsets = np.ascontiguousarray(self.offsets, dtype="<f8")
        if self.offsets.ndim != 1:
            raise ProtocolError("offset array must be 1-D")

    def __len__(self):
        return self.offsets.size

    @property
    def nbytes(self) -> int:
        return len(self) * OFFSET_BYTES_PER_CELL

    def to_bytes(self) -> bytes:
        return self.offsets.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "OffsetPayload":
        if len(buf) % OFFSET_BYTES_PER_CELL:
            raise ProtocolError(f"offset payload of {len(buf)} bytes is not a multiple of 8")
        return cls(np.frombuffer(buf, dtype="<f8"))


def encode(tile: tuple[int, int], payload) -> bytes:
    if isinstance(payload, PerimeterPayload):
        kind = KIND_PERIMETER
    elif isinstance(payload, OffsetPayload):
        kind = KIND_OFFSET
    else:
        raise TypeError(f"cannot encode {type(payload).__name__}")
    body = payload.to_bytes()
    return ENVELOPE.pack(tile[0], tile[1], kind, len(body)) + body


def decode(message: bytes):
    """Inverse of :func:`encode`; returns ``(tile, payload)``."""
    if len(message) < ENVELOPE_SIZE:
        raise ProtocolError(f"message of {len(message)} bytes is shorter than its envelope")
    row, col, kind, length = ENVELOPE.unpack_from(message)
    body = message[ENVELOPE_SIZE:]
    if len(body) != length:
        raise ProtocolError(f"envelope declares {length} payload bytes, message carries {len(body)}")
    if kind == KIND_PERIMETER:
        return (row, col), PerimeterPayload.from_bytes(body)
    if kind == KIND_OFFSET:
        return (row, col), OffsetPayload.from_bytes(body)
    raise ProtocolError(f"unknown payload kind {kind}")
