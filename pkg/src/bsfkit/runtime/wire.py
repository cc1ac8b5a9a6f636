"""Binary framing for the multi-process backend.

Every frame is ``[u32 LE payload length][u8 tag][payload]``. Vectors are an
8-byte LE count followed by that many LE IEEE-754 doubles.
"""

from __future__ import annotations

import socket
import struct
from typing import List, Tuple

import numpy as np

INIT = 0x01
ORDER = 0x02
PARTIAL = 0x03
STOP = 0x04

TAG_NAMES = {INIT: "INIT", ORDER: "ORDER", PARTIAL: "PARTIAL", STOP: "STOP"}

HEADER = struct.Struct("<IB")
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")
_PARTIAL_HEAD = struct.Struct("<QI")

MAX_PAYLOAD = 0xFFFFFFFF


class ProtocolError(OSError):
    pass


class ConnectionClosed(ProtocolError):
    pass


def encode_frame(tag: int, payload: bytes = b"") -> bytes:
    if tag not in TAG_NAMES:
        raise ProtocolError(f"unknown tag 0x{tag:02x}")
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(payload)} bytes does not fit a u32 length")
    return HEADER.pack(len(payload), tag) + bytes(payload)


def pack_vector(values) -> bytes:
    arr = np.ascontiguousarray(values, dtype="<f8").ravel()
    return _U64.pack(arr.size) + arr.tobytes()


def unpack_vector(buf, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Decode one vector at ``offset``; return it and the offset past it."""
    view = memoryview(buf)
    if len(view) - offset < _U64.size:
        raise ProtocolError("truncated vector count")
    (count,) = _U64.unpack_from(view, offset)
    start = offset + _U64.size
    end = start + 8 * count
    if end > len(view):
        raise ProtocolError(f"vector of {count} doubles overruns payload")
    arr = np.frombuffer(view[start:end], dtype="<f8").astype(np.float64)
    return arr, end


def order_payload(iteration: int, body: bytes) -> bytes:
    return _U64.pack(iteration) + body


def parse_order(payload) -> Tuple[int, memoryview]:
    view = memoryview(payload)
    if len(view) < _U64.size:
        raise ProtocolError("truncated ORDER payload")
    (iteration,) = _U64.unpack_from(view, 0)
    return iteration, view[_U64.size:]


def partial_payload(iteration: int, worker: int, body: bytes) -> bytes:
    return _PARTIAL_HEAD.pack(iteration, worker) + body


def parse_partial(payload) -> Tuple[int, int, memoryview]:
    view = memoryview(payload)
    if len(view) < _PARTIAL_HEAD.size:
        raise ProtocolError("truncated PARTIAL payload")
    iteration, worker = _PARTIAL_HEAD.unpack_from(view, 0)
    return iteration, worker, view[_PARTIAL_HEAD.size:]


def encode_handshake(worker: int) -> bytes:
    return _U32.pack(worker)


def decode_handshake(data: bytes) -> int:
    return _U32.unpack(data)[0]


def recv_exactly(sock: socket.socket, n: int) -> bytes:
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], n - got)
        if k == 0:
            raise ConnectionClosed(f"peer closed after {got} of {n} bytes")
        got += k
    return bytes(buf)


def read_frame(sock: socket.socket) -> Tuple[int, bytes]:
    length, tag = HEADER.unpack(recv_exactly(sock, HEADER.size))
    if tag not in TAG_NAMES:
        raise ProtocolError(f"unknown tag 0x{tag:02x}")
    return tag, recv_exactly(sock, length)


def send_frame(sock: socket.socket, tag: int, payload: bytes = b"") -> None:
    sock.sendall(encode_frame(tag, payload))


class FrameDecoder:
    """Incremental decoder for a byte stream that arrives in pieces."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> List[Tuple[int, bytes]]:
        self._buf += data
        frames = []
        while len(self._buf) >= HEADER.size:
            length, tag = HEADER.unpack_from(self._buf, 0)
            if tag not in TAG_NAMES:
                raise ProtocolError(f"unknown tag 0x{tag:02x}")
            end = HEADER.size + length
            if len(self._buf) < end:
                break
            frames.append((tag, bytes(self._buf[HEADER.size:end])))
            del self._buf[:end]
        return frames

    @property
    def pending(self) -> int:
        return len(self._buf)
