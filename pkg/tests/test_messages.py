import struct
from pathlib import Path

import numpy as np
import pytest

from flowaccum import messages
from flowaccum.errors import ProtocolError
from flowaccum.messages import OffsetPayload, PerimeterPayload
from flowaccum.store import read_ascii_grid
from flowaccum.tile import extract_payload, solve_tile

DATA = Path(__file__).parent / "data"
GOLDEN_GRID = "3 3 3\n5 o 7\n. 1 8"


def test_perimeter_message_golden_bytes():
    sol = solve_tile(read_ascii_grid(GOLDEN_GRID))
    msg = messages.encode((1, 2), extract_payload(sol))
    assert msg == (DATA / "golden_perimeter_r1_c2.bin").read_bytes()
    # Layout spelled out independently: envelope, 8 F bytes, 8 doubles, 8 uint16.
    F = bytes([3, 3, 3, 7, 8, 1, 255, 5])
    A = struct.pack("<8d", 1, 2, 3, 1, 1, 1, float("nan"), 1)
    L = struct.pack("<8H", 2, 2, 65534, 65535, 65535, 65535, 65535, 65535)
    assert msg[:13] == struct.pack("<IIBI", 1, 2, 1, 88)
    assert msg[13:21] == F
    assert msg[21:85] == A
    assert msg[85:] == L


def test_offset_message_golden_bytes():
    msg = messages.encode((1, 2), OffsetPayload(np.arange(8) * 1.5))
    assert msg == (DATA / "golden_offset_r1_c2.bin").read_bytes()
    assert msg == struct.pack("<IIBI", 1, 2, 2, 64) + struct.pack("<8d", *(np.arange(8) * 1.5))


def test_round_trip(rng):
    P = 28
    pay = PerimeterPayload(rng.integers(0, 9, P), rng.random(P), rng.integers(0, 65535, P))
    tile, back = messages.decode(messages.encode((5, 9), pay))
    assert tile == (5, 9)
    assert back.to_bytes() == pay.to_bytes()
    assert pay.nbytes == P * 11 == len(pay.to_bytes())
    off = OffsetPayload(rng.random(P))
    assert messages.decode(messages.encode((0, 0), off))[1].to_bytes() == off.to_bytes()
    assert off.nbytes == P * 8


def test_decode_errors():
    good = messages.encode((0, 0), OffsetPayload(np.ones(4)))
    with pytest.raises(ProtocolError):
        messages.decode(good[:-1])
    with pytest.raises(ProtocolError):
        messages.decode(good[:5])
    with pytest.raises(ProtocolError):
        messages.decode(struct.pack("<IIBI", 0, 0, 9, 0))
    with pytest.raises(ProtocolError):
        messages.decode(struct.pack("<IIBI", 0, 0, 1, 5) + b"\0" * 5)
    with pytest.raises(ProtocolError):
        PerimeterPayload(np.zeros(3), np.zeros(4), np.zeros(3))
