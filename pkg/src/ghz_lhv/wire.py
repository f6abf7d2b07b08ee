"""Binary wire format between the hub and the measurement stations.

Every frame is::

    u32  length     number of bytes that follow (type byte + payload)
    u8   type
    ...  payload

All integers and doubles are little-endian.  Payloads by type:

``SETTING`` (1)   u8 station, f64 setting
``EMISSIONS`` (2) u32 count, then count records of
                  (u64 index, f64 omega, f64 eta)
``OUTCOMES`` (3)  u8 station, u32 count, then count records of
                  (u64 index, i8 outcome)
``END`` (4)       empty
``ERROR`` (5)     u64 trial index, utf-8 message

Emission records have no room for anything but the hidden configuration, so
a station cannot learn another station's setting from the source.
"""

from __future__ import annotations

import enum
import queue
import socket
import struct
from dataclasses import dataclass

import numpy as np

HEADER = struct.Struct("<IB")
SETTING_BODY = struct.Struct("<Bd")
COUNT = struct.Struct("<I")
STATION_COUNT = struct.Struct("<BI")
ERROR_HEAD = struct.Struct("<Q")

EMISSION_DTYPE = np.dtype([("index", "<u8"), ("omega", "<f8"), ("eta", "<f8")])
OUTCOME_DTYPE = np.dtype([("index", "<u8"), ("outcome", "i1")])

STATIONS = ("A", "B", "C")


class FrameType(enum.IntEnum):
    SETTING = 1
    EMISSIONS = 2
    OUTCOMES = 3
    END = 4
    ERROR = 5


class WireError(Exception):
    pass


class TransportError(Exception):
    """A station link failed; ``trial`` is the first trial left incomplete."""

    def __init__(self, message: str, trial: int = -1):
        super().__init__(f"{message} (trial {trial})")
        self.trial = trial


def _frame(kind: FrameType, payload: bytes) -> bytes:
    return HEADER.pack(len(payload) + 1, kind) + payload


def encode_setting(station: int, setting: float) -> bytes:
    return _frame(FrameType.SETTING, SETTING_BODY.pack(station, setting))


def encode_emissions(index, omega, eta) -> bytes:
    rec = np.empty(len(index), dtype=EMISSION_DTYPE)
    rec["index"] = index
    rec["omega"] = omega
    rec["eta"] = eta
    return _frame(FrameType.EMISSIONS, COUNT.pack(len(rec)) + rec.tobytes())


def encode_outcomes(station: int, index, outcome) -> bytes:
    rec = np.empty(len(index), dtype=OUTCOME_DTYPE)
    rec["index"] = index
    rec["outcome"] = outcome
    return _frame(FrameType.OUTCOMES, STATION_COUNT.pack(station, len(rec)) + rec.tobytes())


def encode_end() -> bytes:
    return _frame(FrameType.END, b"")


def encode_error(trial: int, message: str) -> bytes:
    return _frame(FrameType.ERROR, ERROR_HEAD.pack(trial) + message.encode())


@dataclass
class Frame:
    kind: FrameType
    station: int = -1
    setting: float = float("nan")
    records: np.ndarray | None = None
    trial: int = -1
    message: str = ""


def decode(frame: bytes) -> Frame:
    """Parse one complete frame; raises ``WireError`` on any malformation."""
    if len(frame) < HEADER.size:
        raise WireError("short frame")
    length, kind = HEADER.unpack_from(frame)
    if length != len(frame) - 4:
        raise WireError(f"length prefix {length} does not match frame size {len(frame)}")
    body = memoryview(frame)[HEADER.size:]
    try:
        kind = FrameType(kind)
    except ValueError:
        raise WireError(f"unknown frame type {kind}") from None
    try:
        return _decode_body(kind, body)
    except (struct.error, UnicodeDecodeError) as exc:
        raise WireError(f"truncated or garbled {kind.name} payload: {exc}") from None


def _decode_body(kind: FrameType, body: memoryview) -> Frame:
    if kind is FrameType.SETTING:
        if len(body) != SETTING_BODY.size:
            raise WireError("bad SETTING payload")
        station, setting = SETTING_BODY.unpack(body)
        return Frame(kind, station=station, setting=setting)
    if kind is FrameType.EMISSIONS:
        (count,) = COUNT.unpack_from(body)
        if len(body) != COUNT.size + count * EMISSION_DTYPE.itemsize:
            raise WireError("bad EMISSIONS payload")
        recs = np.frombuffer(body, EMISSION_DTYPE, count, COUNT.size)
        return Frame(kind, records=recs)
    if kind is FrameType.OUTCOMES:
        station, count = STATION_COUNT.unpack_from(body)
        if len(body) != STATION_COUNT.size + count * OUTCOME_DTYPE.itemsize:
            raise WireError("bad OUTCOMES payload")
        recs = np.frombuffer(body, OUTCOME_DTYPE, count, STATION_COUNT.size)
        return Frame(kind, station=station, records=recs)
    if kind is FrameType.END:
        if len(body):
            raise WireError("END carries no payload")
        return Frame(kind)
    (trial,) = ERROR_HEAD.unpack_from(body)
    return Frame(kind, trial=trial, message=bytes(body[ERROR_HEAD.size:]).decode())


# --------------------------------------------------------------------------
# transports


class ChannelEndpoint:
    """One side of an in-process duplex link made of two queues."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float = 60.0):
        self.inbox = inbox
        self.outbox = outbox
        self.timeout = timeout

    @classmethod
    def pair(cls, timeout: float = 60.0):
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b, timeout), cls(b, a, timeout)

    def send(self, frame: bytes) -> None:
        self.outbox.put(bytes(frame))

    def recv(self) -> bytes:
        try:
            return self.inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError("channel receive timed out") from None

    def close(self) -> None:
        pass


class SocketEndpoint:
    """Length-prefixed frames over a stream socket."""

    def __init__(self, sock: socket.socket, timeout: float = 60.0):
        self.sock = sock
        self.sock.settimeout(timeout)

    def send(self, frame: bytes) -> None:
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"socket send failed: {exc}") from exc

    def _exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(min(n - len(buf), 1 << 20))
            except OSError as exc:
                raise TransportError(f"socket receive failed: {exc}") from exc
            if not chunk:
                raise TransportError("connection closed mid-stream")
            buf += chunk
        return bytes(buf)

    def recv(self) -> bytes:
        head = self._exact(4)
        (length,) = struct.unpack("<I", head)
        return head + self._exact(length)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass
