"""Timing oracle: encrypts packets under a secret key and reports only time.

Wire protocol over a TCP stream, all integers big-endian:

    request   u32 length (16..1024, multiple of 16) | payload[length]
    response  u64 cycles | scrambled_zeros[16]
    error     single byte 0xFF, then the server closes the connection

``scrambled_zeros`` is AES-128 of the all-zero block under the secret
key.  The payload's ciphertext is never sent.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .aes import encrypt_payload, scrambled_zeros
from .cache import CacheConfig, ClockSource, read_cycle_counter, simulate_encryption
from .countermeasure import PaddingPolicy, RoundPadder, packet_cycles

log = logging.getLogger(__name__)

MIN_PACKET = 16
MAX_PACKET = 1024
DEFAULT_PACKET = 800
ERROR_FRAME = b"\xff"
RESPONSE_SIZE = 24

_LEN = struct.Struct(">I")
_RESP = struct.Struct(">Q16s")


class ProtocolError(Exception):
    pass


def valid_length(n: int) -> bool:
    return MIN_PACKET <= n <= MAX_PACKET and n % 16 == 0


def encode_request(payload: bytes) -> bytes:
    return _LEN.pack(len(payload)) + payload


def encode_response(cycles: int, zeros: bytes) -> bytes:
    return _RESP.pack(cycles, zeros)


def decode_response(data: bytes) -> tuple[int, bytes]:
    if len(data) != RESPONSE_SIZE:
        raise ProtocolError(f"expected {RESPONSE_SIZE}-byte response, got {len(data)}")
    return _RESP.unpack(data)


def recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError(f"connection closed after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


@dataclass
class OracleConfig:
    secret_key: bytes
    policy: PaddingPolicy = field(default_factory=PaddingPolicy.none)
    clock: ClockSource = ClockSource.SIMULATED
    cache: CacheConfig = field(default_factory=CacheConfig)
    host: str = "127.0.0.1"
    port: int = 0

    def __post_init__(self):
        if len(self.secret_key) != 16:
            raise ValueError("secret key must be 16 bytes")


class TimingOracle:
    """The victim's encryption service, minus the network.

    Measurements are serialised by a lock: one encryption is timed at a
    time no matter how many connections are open.
    """

    def __init__(self, cfg: OracleConfig):
        self.cfg = cfg
        self.zeros = scrambled_zeros(cfg.secret_key)
        self._lock = threading.Lock()
        self._rng = np.random.default_rng(cfg.cache.rng_seed)
        self._padder = RoundPadder(cfg.policy) if cfg.clock is ClockSource.HARDWARE else None

    def measure(self, payload: bytes) -> int:
        with self._lock:
            if self._padder is not None:
                return self._measure_hw(payload)
            _, trace = encrypt_payload(self.cfg.secret_key, payload)
            rounds = simulate_encryption(trace, self.cfg.cache, self._rng)
            return packet_cycles(rounds, self.cfg.policy)

    def _measure_hw(self, payload: bytes) -> int:
        padder = self._padder
        key = self.cfg.secret_key
        t0 = read_cycle_counter()
        for i in range(0, len(payload), 16):
            padder.start()
            encrypt_payload(key, payload[i:i + 16], round_hook=padder)
        return read_cycle_counter() - t0

    def query(self, payload: bytes) -> tuple[int, bytes]:
        if not valid_length(len(payload)):
            raise ValueError(f"bad packet length {len(payload)}")
        return self.measure(payload), self.zeros


def handle_packet(payload: bytes, oracle: TimingOracle) -> bytes:
    """Serve one request body; returns the 24-byte response frame."""
    cycles, zeros = oracle.query(payload)
    return encode_response(cycles, zeros)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        oracle: TimingOracle = self.server.oracle
        sock = self.request
        while True:
            try:
                head = sock.recv(4, socket.MSG_WAITALL)
            except OSError:
                return
            if not head:
                return
            if len(head) < 4:
                return
            (n,) = _LEN.unpack(head)
            if not valid_length(n):
                log.warning("bad request length %d from %s", n, self.client_address)
                try:
                    sock.sendall(ERROR_FRAME)
                except OSError:
                    pass
                return
            try:
                payload = recv_exact(sock, n)
                sock.sendall(handle_packet(payload, oracle))
            except (ConnectionError, OSError) as e:
                log.info("connection dropped: %s", e)
                return


class OracleServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, cfg: OracleConfig):
        self.oracle = TimingOracle(cfg)
        self._thread = None
        super().__init__((cfg.host, cfg.port), _Handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start_background(self) -> "OracleServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        if self._thread is not None:
            self.shutdown()
            self._thread.join()
        super().__exit__(*exc)


def serve(cfg: OracleConfig) -> None:
    """Run the oracle until interrupted."""
    with OracleServer(cfg) as srv:
        log.info("serving on %s:%d (policy %s, %s clock)", *srv.address, cfg.policy, cfg.clock.value)
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass


class OracleClient:
    """Blocking client; one request in flight at a time."""

    def __init__(self, address: tuple[str, int], timeout: float | None = 30.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def query(self, payload: bytes) -> tuple[int, bytes]:
        self.sock.sendall(encode_request(payload))
        first = recv_exact(self.sock, 1)
        # cycles never reach 2**56, so a real response never starts with 0xFF
        if first == ERROR_FRAME:
            raise ProtocolError("server rejected the request")
        return decode_response(first + recv_exact(self.sock, RESPONSE_SIZE - 1))

    def close(self):
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
