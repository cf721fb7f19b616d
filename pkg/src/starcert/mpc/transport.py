"""Round-based broadcast transports for the computing servers.

Every protocol step is an all-to-all broadcast: each party posts one
message for round ``r`` and blocks until it holds the round-``r`` message of
every other party.  Two transports share that contract: an in-process bus
(deterministic, used for simulation and tests) and a TCP mesh.

Wire format of one frame::

    u32 length | u8 tag | u32 round | u16 sender | payload

where ``length`` counts every byte after itself and the payload is a
sequence of non-negative integers, each as ``u16 byte-length`` followed by
its big-endian magnitude.
"""

from __future__ import annotations

import hashlib
import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

log = logging.getLogger(__name__)

_HEADER = struct.Struct(">BIH")  # tag, round, sender
_LEN = struct.Struct(">I")


class Tag(IntEnum):
    MASK = 1
    DECRYPT = 2
    TRIPLE_A = 3
    TRIPLE_B = 4
    OPEN = 5
    REVEAL = 6
    SIGN = 7
    CONTROL = 8


class ProtocolAbort(RuntimeError):
    """A round could not complete; ``party`` names the offending server if known."""

    def __init__(self, message: str, party: int | None = None) -> None:
        self.party = party
        super().__init__(message if party is None else "party %d: %s" % (party, message))


@dataclass(frozen=True)
class Message:
    tag: int
    round: int
    sender: int
    payload: tuple[int, ...]


def encode_payload(values: Sequence[int]) -> bytes:
    out = bytearray()
    for x in values:
        if x < 0:
            raise ValueError("payload integers must be non-negative")
        b = x.to_bytes((x.bit_length() + 7) // 8, "big")
        if len(b) > 0xFFFF:
            raise ValueError("integer too large for the wire format")
        out += struct.pack(">H", len(b)) + b
    return bytes(out)


def decode_payload(data: bytes) -> tuple[int, ...]:
    values = []
    pos = 0
    while pos < len(data):
        if pos + 2 > len(data):
            raise ValueError("truncated integer length prefix")
        (size,) = struct.unpack_from(">H", data, pos)
        pos += 2
        if pos + size > len(data):
            raise ValueError("truncated integer body")
        values.append(int.from_bytes(data[pos:pos + size], "big"))
        pos += size
    return tuple(values)


def encode_message(msg: Message) -> bytes:
    body = _HEADER.pack(msg.tag, msg.round, msg.sender) + encode_payload(msg.payload)
    return _LEN.pack(len(body)) + body


def decode_message(frame: bytes) -> Message:
    if len(frame) < _LEN.size + _HEADER.size:
        raise ValueError("frame too short")
    (length,) = _LEN.unpack_from(frame, 0)
    if length != len(frame) - _LEN.size:
        raise ValueError("frame length mismatch")
    tag, rnd, sender = _HEADER.unpack_from(frame, _LEN.size)
    payload = decode_payload(frame[_LEN.size + _HEADER.size:])
    return Message(tag, rnd, sender, payload)


class Transport:
    """Interface shared by the in-process and TCP transports."""

    party_id: int
    n_parties: int
    round: int

    def exchange(self, tag: int, payload: Sequence[int]) -> dict[int, tuple[int, ...]]:
        raise NotImplementedError

    def close(self) -> None:
        pass


def _check_round(msgs: dict[int, Message], tag: int, rnd: int) -> dict[int, tuple[int, ...]]:
    out = {}
    for sender, m in msgs.items():
        if m.tag != tag or m.round != rnd:
            raise ProtocolAbort("out of step: sent tag %d round %d, expected tag %d round %d"
                                % (m.tag, m.round, tag, rnd), party=sender)
        out[sender] = m.payload
    return out


class LocalBus:
    """Deterministic in-process broadcast bus for ``n_parties`` threads.

    Keeps a running SHA-256 over every message in (round, sender) order, and
    optionally the encoded frames themselves.
    """

    def __init__(self, n_parties: int, timeout: float = 120.0, record: bool = False) -> None:
        self.n_parties = n_parties
        self.timeout = timeout
        self.record = record
        self.frames: list[bytes] = []
        self._digest = hashlib.sha256()
        self._cond = threading.Condition()
        self._slots: dict[int, dict[int, Message]] = {}
        self._reads: dict[int, int] = {}
        self._abort: str | None = None
        self._abort_party: int | None = None

    def endpoint(self, party_id: int) -> LocalEndpoint:
        if not 1 <= party_id <= self.n_parties:
            raise ValueError("party id out of range")
        return LocalEndpoint(self, party_id)

    def transcript_digest(self) -> str:
        with self._cond:
            return self._digest.copy().hexdigest()

    def abort(self, reason: str, party: int | None = None) -> None:
        with self._cond:
            if self._abort is None:
                self._abort = reason
                self._abort_party = party
            self._cond.notify_all()

    def _post(self, msg: Message) -> dict[int, Message]:
        n = self.n_parties
        with self._cond:
            if self._abort is not None:
                raise ProtocolAbort("bus aborted: " + self._abort, self._abort_party)
            slot = self._slots.setdefault(msg.round, {})
            if msg.sender in slot:
                raise ProtocolAbort("duplicate message in round %d" % msg.round, msg.sender)
            slot[msg.sender] = msg
            if len(slot) == n:
                for sender in sorted(slot):
                    frame = encode_message(slot[sender])
                    self._digest.update(frame)
                    if self.record:
                        self.frames.append(frame)
                self._cond.notify_all()
            else:
                done = self._cond.wait_for(lambda: self._abort is not None or len(slot) == n,
                                           self.timeout)
                if self._abort is not None:
                    raise ProtocolAbort("bus aborted: " + self._abort, self._abort_party)
                if not done:
                    missing = sorted(set(range(1, n + 1)) - set(slot))
                    self._abort = "round %d timed out" % msg.round
                    self._abort_party = missing[0]
                    self._cond.notify_all()
                    raise ProtocolAbort("no message for round %d" % msg.round, missing[0])
            result = dict(slot)
            self._reads[msg.round] = self._reads.get(msg.round, 0) + 1
            if self._reads[msg.round] == n:
                del self._slots[msg.round]
                del self._reads[msg.round]
            return result


class LocalEndpoint(Transport):
    def __init__(self, bus: LocalBus, party_id: int) -> None:
        self.bus = bus
        self.party_id = party_id
        self.n_parties = bus.n_parties
        self.round = 0

    def exchange(self, tag: int, payload: Sequence[int]) -> dict[int, tuple[int, ...]]:
        msg = Message(int(tag), self.round, self.party_id, tuple(payload))
        msgs = self.bus._post(msg)
        out = _check_round(msgs, int(tag), self.round)
        self.round += 1
        return out


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    buf = bytearray()
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> Message:
    head = _recv_exact(sock, _LEN.size)
    (length,) = _LEN.unpack(head)
    return decode_message(head + _recv_exact(sock, length))


class TcpTransport(Transport):
    """Full-mesh TCP transport with the same per-round barrier as the bus.

    Party ``i`` listens on ``addresses[i]``, dials every lower-numbered party
    and accepts connections from every higher-numbered one.  A reader thread
    per peer drains its socket into a queue so large broadcasts never
    deadlock on full send buffers.
    """

    def __init__(self, party_id: int, addresses: dict[int, tuple[str, int]],
                 timeout: float = 120.0) -> None:
        self.party_id = party_id
        self.n_parties = len(addresses)
        self.addresses = addresses
        self.timeout = timeout
        self.round = 0
        self._socks: dict[int, socket.socket] = {}
        self._queues: dict[int, queue.Queue] = {}
        self._threads: list[threading.Thread] = []
        self._listener: socket.socket | None = None

    def connect(self) -> TcpTransport:
        host, port = self.addresses[self.party_id]
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(self.n_parties)
        listener.settimeout(self.timeout)
        self._listener = listener
        deadline = time.monotonic() + self.timeout
        for peer in range(1, self.party_id):
            while True:
                try:
                    s = socket.create_connection(self.addresses[peer], timeout=self.timeout)
                    break
                except OSError:
                    if time.monotonic() > deadline:
                        raise ProtocolAbort("could not reach peer", peer)
                    time.sleep(0.05)
            s.sendall(struct.pack(">H", self.party_id))
            self._attach(peer, s)
        for _ in range(self.party_id + 1, self.n_parties + 1):
            try:
                s, _addr = listener.accept()
            except socket.timeout:
                missing = sorted(set(range(self.party_id + 1, self.n_parties + 1)) - set(self._socks))
                raise ProtocolAbort("peer never connected", missing[0])
            s.settimeout(self.timeout)
            (peer,) = struct.unpack(">H", _recv_exact(s, 2))
            if peer <= self.party_id or peer in self._socks:
                raise ProtocolAbort("unexpected hello", peer)
            self._attach(peer, s)
        return self

    def _attach(self, peer: int, s: socket.socket) -> None:
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        s.settimeout(None)
        self._socks[peer] = s
        q: queue.Queue = queue.Queue()
        self._queues[peer] = q

        def reader() -> None:
            try:
                while True:
                    q.put(read_frame(s))
            except (OSError, ConnectionError, ValueError) as exc:
                q.put(exc)

        t = threading.Thread(target=reader, name="tcp-reader-%d" % peer, daemon=True)
        t.start()
        self._threads.append(t)

    def exchange(self, tag: int, payload: Sequence[int]) -> dict[int, tuple[int, ...]]:
        msg = Message(int(tag), self.round, self.party_id, tuple(payload))
        frame = encode_message(msg)
        for peer, s in self._socks.items():
            try:
                s.sendall(frame)
            except OSError as exc:
                raise ProtocolAbort("send failed: %s" % exc, peer)
        msgs = {self.party_id: msg}
        for peer, q in self._queues.items():
            try:
                item = q.get(timeout=self.timeout)
            except queue.Empty:
                raise ProtocolAbort("no message for round %d" % self.round, peer)
            if isinstance(item, Exception):
                raise ProtocolAbort("connection lost: %s" % item, peer)
            if item.sender != peer:
                raise ProtocolAbort("sender id mismatch", peer)
            msgs[peer] = item
        out = _check_round(msgs, int(tag), self.round)
        self.round += 1
        return out

    def close(self) -> None:
        for s in self._socks.values():
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
        if self._listener is not None:
            self._listener.close()
