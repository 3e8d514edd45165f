#!/usr/bin/env python3
"""
Two-party transport between S1 and S2 with byte and round metering.

Frame format: 4-byte big-endian payload length, 1 type byte, payload.
Every frame is metered at full wire size (header included) by the endpoint
that sends or receives it, so the S1 endpoint's transcript accounts for the
whole session.

Two transports share the framing code:
  - loopback: in-process, single-threaded; when S1 waits for a reply the
    attached S2 responder handles the pending request synchronously
  - TCP: S2 serves on host:port in its own thread or process
"""

import logging
import socket
import struct
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, Dict, Optional, Tuple

from .errors import ChannelClosed

logger = logging.getLogger(__name__)

HEADER = struct.Struct('>IB')
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 1 << 28


class PartyId(str, Enum):
    USER = 'User'
    S1 = 'S1'
    S2 = 'S2'


class MessageType(IntEnum):
    CMP_BLIND = 1
    CMP_RESULT = 2
    DIV_REQ = 3
    DIV_SCALAR = 4
    PRO_SUM = 5
    PRO_SCALAR = 6
    FPS_REQ = 7
    FPS_THRESHOLDS = 8
    ERROR = 9
    CLOSE = 10


Frame = Tuple[MessageType, bytes]


@dataclass
class Transcript:
    """Message, byte and round counts seen by one endpoint"""
    messages: int = 0
    bytes_sent: Dict[str, int] = field(default_factory=dict)
    rounds: int = 0
    by_type: Dict[str, int] = field(default_factory=dict)
    _last_direction: Optional[str] = field(default=None, repr=False)

    def record(self, sender: PartyId, receiver: PartyId, msg_type: MessageType, size: int):
        direction = f"{sender.value}->{receiver.value}"
        self.messages += 1
        self.bytes_sent[direction] = self.bytes_sent.get(direction, 0) + size
        self.by_type[msg_type.name] = self.by_type.get(msg_type.name, 0) + 1
        if direction != self._last_direction:
            self.rounds += 1
            self._last_direction = direction

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_sent.values())

    def summary(self) -> Dict:
        return {
            'messages': self.messages,
            'rounds': self.rounds,
            'bytes_sent': dict(sorted(self.bytes_sent.items())),
            'total_bytes': self.total_bytes,
            'by_type': dict(sorted(self.by_type.items())),
        }


def encode_frame(msg_type: MessageType, payload: bytes) -> bytes:
    if not payload:
        raise ValueError("frames must carry a non-empty payload")
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds the frame limit")
    return HEADER.pack(len(payload), int(msg_type)) + payload


class Endpoint(ABC):
    """One side of an S1<->S2 channel"""

    def __init__(self, party: PartyId, peer: PartyId):
        self.party = party
        self.peer = peer
        self.transcript = Transcript()
        self.closed = False

    def send(self, msg_type: MessageType, payload: bytes):
        if self.closed:
            raise ChannelClosed(f"{self.party.value} endpoint is closed")
        wire = encode_frame(msg_type, payload)
        self._write(wire)
        self.transcript.record(self.party, self.peer, msg_type, len(wire))

    def recv(self) -> Frame:
        if self.closed:
            raise ChannelClosed(f"{self.party.value} endpoint is closed")
        header = self._read(HEADER_SIZE)
        length, type_byte = HEADER.unpack(header)
        if length == 0 or length > MAX_PAYLOAD:
            raise ChannelClosed(f"invalid frame length {length}")
        payload = self._read(length)
        try:
            msg_type = MessageType(type_byte)
        except ValueError:
            raise ChannelClosed(f"unknown frame type {type_byte}")
        self.transcript.record(self.peer, self.party, msg_type, HEADER_SIZE + length)
        return msg_type, payload

    def request(self, msg_type: MessageType, payload: bytes) -> Frame:
        """Send one frame and wait for the reply"""
        self.send(msg_type, payload)
        return self.recv()

    def close(self):
        self.closed = True

    @abstractmethod
    def _write(self, data: bytes):
        ...

    @abstractmethod
    def _read(self, size: int) -> bytes:
        ...


class LoopbackEndpoint(Endpoint):
    """In-process endpoint backed by byte queues"""

    def __init__(self, party: PartyId, peer: PartyId):
        super().__init__(party, peer)
        self.inbox = bytearray()
        self.other: Optional['LoopbackEndpoint'] = None
        self.pump: Optional[Callable[[], bool]] = None

    def _write(self, data: bytes):
        if self.other is None or self.other.closed:
            raise ChannelClosed("peer endpoint is closed")
        self.other.inbox.extend(data)

    def _read(self, size: int) -> bytes:
        while len(self.inbox) < size:
            # Let the responder run; it returns False when it has nothing to do
            if self.pump is None or not self.pump():
                raise ChannelClosed(f"{self.party.value} is waiting on a closed or idle peer")
        data = bytes(self.inbox[:size])
        del self.inbox[:size]
        return data

    def close(self):
        super().close()
        self.inbox.clear()


def loopback_pair(a: PartyId = PartyId.S1, b: PartyId = PartyId.S2) -> Tuple[LoopbackEndpoint, LoopbackEndpoint]:
    left, right = LoopbackEndpoint(a, b), LoopbackEndpoint(b, a)
    left.other, right.other = right, left
    return left, right


class SocketEndpoint(Endpoint):
    """TCP endpoint; same framing as the loopback transport"""

    def __init__(self, sock: socket.socket, party: PartyId, peer: PartyId):
        super().__init__(party, peer)
        self.sock = sock

    def _write(self, data: bytes):
        try:
            self.sock.sendall(data)
        except OSError as e:
            raise ChannelClosed(f"send failed: {e}")

    def _read(self, size: int) -> bytes:
        chunks = []
        remaining = size
        while remaining:
            try:
                chunk = self.sock.recv(remaining)
            except OSError as e:
                raise ChannelClosed(f"receive failed: {e}")
            if not chunk:
                raise ChannelClosed("peer closed the connection")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b''.join(chunks)

    def close(self):
        if not self.closed:
            try:
                self.sock.close()
            except OSError:
                pass
        super().close()


def serve_one(endpoint: Endpoint, handler: Callable[[MessageType, bytes], Frame]) -> bool:
    """Receive one request, answer it. Returns False once the session is over."""
    msg_type, payload = endpoint.recv()
    if msg_type == MessageType.CLOSE:
        endpoint.close()
        return False
    reply_type, reply = handler(msg_type, payload)
    endpoint.send(reply_type, reply)
    if reply_type == MessageType.ERROR:
        endpoint.close()
        return False
    return True


def serve_forever(endpoint: Endpoint, handler: Callable[[MessageType, bytes], Frame]):
    """S2's request loop"""
    try:
        while serve_one(endpoint, handler):
            pass
    except ChannelClosed as e:
        logger.debug(f"{endpoint.party.value} stopped serving: {e}")
    finally:
        endpoint.close()


def connect_loopback(handler: Callable[[MessageType, bytes], Frame]) -> LoopbackEndpoint:
    """S1 endpoint whose peer is `handler`, driven synchronously"""
    s1_end, s2_end = loopback_pair()

    def pump() -> bool:
        if s2_end.closed or not s2_end.inbox:
            return False
        serve_one(s2_end, handler)
        return True

    s1_end.pump = pump
    return s1_end


class TcpServer:
    """Listens for one S1 connection and serves it on a background thread"""

    def __init__(self, handler: Callable[[MessageType, bytes], Frame],
                 host: str = '127.0.0.1', port: int = 0):
        self.handler = handler
        self.listener = socket.create_server((host, port))
        self.address = self.listener.getsockname()[:2]
        self.thread = threading.Thread(target=self._run, name='pega-s2', daemon=True)

    def start(self) -> 'TcpServer':
        self.thread.start()
        logger.info(f"S2 listening on {self.address[0]}:{self.address[1]}")
        return self

    def _run(self):
        try:
            conn, peer = self.listener.accept()
        except OSError as e:
            logger.error(f"S2 listener failed: {e}")
            return
        finally:
            self.listener.close()
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        logger.debug(f"S2 accepted connection from {peer}")
        serve_forever(SocketEndpoint(conn, PartyId.S2, PartyId.S1), self.handler)

    def join(self, timeout: Optional[float] = None):
        self.thread.join(timeout)


def connect_tcp(host: str, port: int, timeout: float = 30.0) -> SocketEndpoint:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketEndpoint(sock, PartyId.S1, PartyId.S2)


def close_session(endpoint: Endpoint):
    """Tell S2 the session is over and close S1's side"""
    if endpoint.closed:
        return
    try:
        endpoint.send(MessageType.CLOSE, b'\x00')
        if isinstance(endpoint, LoopbackEndpoint) and endpoint.pump is not None:
            endpoint.pump()
    except ChannelClosed:
        pass
    summary = endpoint.transcript.summary()
    logger.info(f"Session closed: {summary['messages']} messages, "
                f"{summary['total_bytes']} bytes, {summary['rounds']} rounds")
    endpoint.close()
