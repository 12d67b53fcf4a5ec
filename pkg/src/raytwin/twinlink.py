"""Datagram protocol for running the channel engine out of process.

Frame layout (little-endian):

    magic "VN3T" | version u8 | type u8 | sequence u32 | payload_len u16 | payload

Payloads (all floats IEEE-754 binary64):

    INIT        sha-256 digest of the scenario file (32 bytes); both ends
                load the scenario independently and compare digests
    LOC_UPDATE  vehicle_id u32, t f64, position 3*f64, velocity 3*f64,
                heading f64 (68 bytes)
    CHAN_REQ    tx_id u32, rx_id u32, t f64 (16 bytes)
    CHAN_RESP   tx_id u32, rx_id u32, total_gain f64, delay f64, los u8
                (25 bytes); an inactive pair is encoded as gain 0, los 0,
                delay +inf

Responses echo the request's sequence number; duplicate LOC_UPDATE
sequence numbers (datagram redelivery) are applied once.
"""

from __future__ import annotations

import hashlib
import logging
import math
import socket
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum

from .errors import FrameError, InactiveVehicle, PayloadTooLarge, TruncatedFrame
from .mobility import VehicleState
from .raychannel import ChannelSummary

log = logging.getLogger("raytwin.twinlink")

MAGIC = b"VN3T"
VERSION = 1
HEADER = struct.Struct("<4sBBIH")
MAX_FRAME = 1400


class MsgType(IntEnum):
    INIT = 1
    LOC_UPDATE = 2
    CHAN_REQ = 3
    CHAN_RESP = 4


@dataclass(frozen=True)
class InitPayload:
    digest: bytes  # 32-byte scenario digest


@dataclass(frozen=True)
class ChanReq:
    tx_id: int
    rx_id: int
    t: float


@dataclass(frozen=True)
class ChanResp:
    tx_id: int
    rx_id: int
    total_gain: float
    delay: float
    los: int


@dataclass(frozen=True)
class Message:
    msg_type: int
    sequence: int
    payload: object


_LOC = struct.Struct("<I8d")
_REQ = struct.Struct("<IId")
_RESP = struct.Struct("<IIddB")


def _encode_payload(msg_type: int, payload) -> bytes:
    if msg_type == MsgType.INIT:
        if len(payload.digest) != 32:
            raise FrameError("INIT digest must be 32 bytes")
        return bytes(payload.digest)
    if msg_type == MsgType.LOC_UPDATE:
        s = payload
        return _LOC.pack(s.vehicle_id, s.t, *s.position, *s.velocity, s.heading)
    if msg_type == MsgType.CHAN_REQ:
        return _REQ.pack(payload.tx_id, payload.rx_id, payload.t)
    if msg_type == MsgType.CHAN_RESP:
        return _RESP.pack(payload.tx_id, payload.rx_id, payload.total_gain,
                          payload.delay, payload.los)
    raise FrameError(f"unknown message type {msg_type}")


def _decode_payload(msg_type: int, raw: bytes):
    if msg_type == MsgType.INIT:
        if len(raw) != 32:
            raise FrameError(f"INIT payload must be 32 bytes, got {len(raw)}")
        return InitPayload(bytes(raw))
    if msg_type == MsgType.LOC_UPDATE:
        if len(raw) != _LOC.size:
            raise FrameError(f"LOC_UPDATE payload must be {_LOC.size} bytes")
        vid, t, px, py, pz, vx, vy, vz, heading = _LOC.unpack(raw)
        return VehicleState(vid, t, (px, py, pz), (vx, vy, vz), heading)
    if msg_type == MsgType.CHAN_REQ:
        if len(raw) != _REQ.size:
            raise FrameError(f"CHAN_REQ payload must be {_REQ.size} bytes")
        return ChanReq(*_REQ.unpack(raw))
    if msg_type == MsgType.CHAN_RESP:
        if len(raw) != _RESP.size:
            raise FrameError(f"CHAN_RESP payload must be {_RESP.size} bytes")
        tx, rx, gain, delay, los = _RESP.unpack(raw)
        if los not in (0, 1):
            raise FrameError(f"CHAN_RESP los flag must be 0 or 1, got {los}")
        return ChanResp(tx, rx, gain, delay, los)
    raise FrameError(f"unknown message type {msg_type}")


def encode(msg: Message) -> bytes:
    """Message -> datagram-safe byte frame (<= 1400 bytes)."""
    payload = _encode_payload(msg.msg_type, msg.payload)
    frame = HEADER.pack(MAGIC, VERSION, int(msg.msg_type),
                        msg.sequence & 0xFFFFFFFF, len(payload)) + payload
    if len(frame) > MAX_FRAME:
        raise PayloadTooLarge(f"frame of {len(frame)} bytes exceeds {MAX_FRAME}")
    return frame


def decode(frame: bytes) -> Message:
    """Inverse of encode; never crashes on truncated or fuzzed input."""
    if len(frame) < 4:
        raise TruncatedFrame(f"frame of {len(frame)} bytes lacks a magic")
    if frame[:4] != MAGIC:
        raise FrameError(f"bad magic {frame[:4]!r}")
    if len(frame) < HEADER.size:
        raise TruncatedFrame(f"frame of {len(frame)} bytes lacks a header")
    _, version, msg_type, sequence, plen = HEADER.unpack_from(frame)
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    if msg_type not in (1, 2, 3, 4):
        raise FrameError(f"unknown message type {msg_type}")
    if len(frame) < HEADER.size + plen:
        raise TruncatedFrame(f"payload truncated: {len(frame) - HEADER.size}/{plen} bytes")
    if len(frame) > HEADER.size + plen:
        raise FrameError("trailing bytes after payload")
    return Message(MsgType(msg_type), sequence,
                   _decode_payload(msg_type, frame[HEADER.size:]))


def scenario_digest(path) -> bytes:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).digest()


# ---------------------------------------------------------------------------
# Responder and client
# ---------------------------------------------------------------------------

class ChannelServer:
    """Single-threaded datagram responder around a ChannelEngine."""

    def __init__(self, bind, scenario_path, engine=None):
        from .scenario import load_scenario
        from .sim import build_ray_engine
        self.digest = scenario_digest(scenario_path)
        self.engine = engine or build_ray_engine(load_scenario(scenario_path))
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(bind)
        self.sock.settimeout(0.2)
        self.address = self.sock.getsockname()
        self._last_loc_seq = {}  # peer -> highest LOC_UPDATE sequence applied
        self._stop = threading.Event()

    def stop(self) -> None:
        self._stop.set()

    def serve_forever(self) -> None:
        try:
            while not self._stop.is_set():
                try:
                    frame, peer = self.sock.recvfrom(4096)
                except socket.timeout:
                    continue
                try:
                    self._handle(frame, peer)
                except Exception:  # noqa: BLE001 - responder must never die
                    log.exception("error handling frame from %s", peer)
        finally:
            self.sock.close()

    def _reply(self, peer, msg: Message) -> None:
        self.sock.sendto(encode(msg), peer)

    def _handle(self, frame: bytes, peer) -> None:
        try:
            msg = decode(frame)
        except FrameError as exc:
            log.warning("dropping bad frame from %s: %s", peer, exc)
            return
        if msg.msg_type == MsgType.INIT:
            if msg.payload.digest != self.digest:
                log.warning("INIT digest mismatch from %s", peer)
            self._reply(peer, Message(MsgType.INIT, msg.sequence, InitPayload(self.digest)))
        elif msg.msg_type == MsgType.LOC_UPDATE:
            last = self._last_loc_seq.get(peer, -1)
            if msg.sequence <= last:
                return  # duplicate datagram, applied once
            self._last_loc_seq[peer] = msg.sequence
            self.engine.location_update(msg.payload)
        elif msg.msg_type == MsgType.CHAN_REQ:
            req = msg.payload
            try:
                summary, _ = self.engine.query_channel((req.tx_id, req.rx_id), req.t)
                resp = ChanResp(req.tx_id, req.rx_id, summary.total_gain,
                                summary.delay, summary.los)
            except InactiveVehicle:
                resp = ChanResp(req.tx_id, req.rx_id, 0.0, math.inf, 0)
            self._reply(peer, Message(MsgType.CHAN_RESP, msg.sequence, resp))
        else:
            log.warning("unexpected %s from %s", msg.msg_type, peer)


def serve_channel(bind, scenario_path, engine=None, ready_callback=None) -> None:
    """Run a channel responder until interrupted."""
    server = ChannelServer(bind, scenario_path, engine)
    if ready_callback is not None:
        ready_callback(server)
    server.serve_forever()


class RemoteChannelService:
    """Client side of the protocol; satisfies the sim channel interface."""

    tag = "ray"

    def __init__(self, address, scenario_path, timeout: float = 2.0, retries: int = 5):
        self.address = address
        self.timeout = timeout
        self.retries = retries
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.settimeout(timeout)
        self._seq = 0
        self.query_log = []
        digest = scenario_digest(scenario_path)
        reply = self._request(Message(MsgType.INIT, self._next_seq(), InitPayload(digest)))
        if reply.payload.digest != digest:
            raise FrameError("scenario digest mismatch between client and server")

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _request(self, msg: Message) -> Message:
        frame = encode(msg)
        for _ in range(self.retries):
            self.sock.sendto(frame, self.address)
            try:
                while True:
                    raw, _ = self.sock.recvfrom(4096)
                    reply = decode(raw)
                    if reply.sequence == msg.sequence:
                        return reply
                    # stale reply from an earlier retry; keep draining
            except socket.timeout:
                continue
        raise TimeoutError(f"no reply from {self.address} after {self.retries} tries")

    def location_update(self, state: VehicleState) -> None:
        frame = encode(Message(MsgType.LOC_UPDATE, self._next_seq(), state))
        self.sock.sendto(frame, self.address)

    def summary(self, tx: int, rx: int, t: float, packet_index: int) -> ChannelSummary:
        reply = self._request(Message(MsgType.CHAN_REQ, self._next_seq(),
                                      ChanReq(tx, rx, t)))
        p = reply.payload
        return ChannelSummary(p.total_gain, p.delay, p.los)

    def close(self) -> None:
        self.sock.close()
