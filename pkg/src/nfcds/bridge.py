"""Client side of the external-denoiser bridge protocol.

Wire format (all integers little-endian u32, all floats float32 LE):

* handshake: the server writes ``NFC1-HELLO\\n`` once on connect;
* schedule frame: ``NFCC`` | T | T floats (cumulative alpha products),
  sent once by the client before its first request, no response;
* request: ``NFC1`` | t | H | W | C | H*W*C floats (the noisy field);
* response: ``NFC1`` | status | payload, where status 0 carries exactly
  H*W*C floats and any nonzero status carries nothing.

Transports: a spawned subprocess speaking the protocol on stdin/stdout
(default) or a TCP socket.
"""

from __future__ import annotations

import os
import selectors
import socket
import struct
import subprocess
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BridgeError, ConfigError

MAGIC_REQUEST = b"NFC1"
MAGIC_CONFIG = b"NFCC"
HELLO = b"NFC1-HELLO\n"
STATUS_OK = 0

_HEADER = struct.Struct("<III")  # t / H / W after the magic, C read separately
_U32 = struct.Struct("<I")


def pack_request(t: int, x: np.ndarray) -> bytes:
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ConfigError(f"request tensor must be (H, W) or (H, W, C), got {x.shape}")
    h, w, c = x.shape
    header = MAGIC_REQUEST + struct.pack("<IIII", t, h, w, c)
    return header + np.ascontiguousarray(x, dtype="<f4").tobytes()


def pack_schedule(alpha_bar: np.ndarray) -> bytes:
    alpha_bar = np.asarray(alpha_bar, dtype="<f4")
    return MAGIC_CONFIG + _U32.pack(alpha_bar.size) + alpha_bar.tobytes()


def pack_response(status: int, payload: Optional[np.ndarray] = None) -> bytes:
    out = MAGIC_REQUEST + _U32.pack(status)
    if status == STATUS_OK and payload is not None:
        out += np.ascontiguousarray(payload, dtype="<f4").tobytes()
    return out


@dataclass(frozen=True)
class BridgeConfig:
    """How to reach the external denoiser."""

    transport: str = "stdio"  # "stdio" | "tcp"
    command: Sequence[str] = field(default_factory=tuple)
    host: str = "127.0.0.1"
    port: int = 0
    timeout: float = 30.0
    send_schedule: bool = True

    def __post_init__(self) -> None:
        if self.transport not in ("stdio", "tcp"):
            raise ConfigError(f"unknown bridge transport {self.transport!r}")
        if self.transport == "stdio" and not self.command:
            raise ConfigError("stdio bridge requires a command to spawn")
        if self.transport == "tcp" and not 0 < self.port < 65536:
            raise ConfigError(f"tcp bridge requires a port in (0, 65536), got {self.port}")
        if self.timeout <= 0:
            raise ConfigError(f"timeout must be > 0, got {self.timeout}")


class BridgeClient:
    """One live protocol session; use as a context manager or call close()."""

    def __init__(self, config: BridgeConfig):
        self.config = config
        self._proc: Optional[subprocess.Popen] = None
        self._sock: Optional[socket.socket] = None
        self._started = False
        self._schedule_sent = False

    # -- transport ---------------------------------------------------------

    def _start(self) -> None:
        if self._started:
            return
        cfg = self.config
        if cfg.transport == "stdio":
            try:
                self._proc = subprocess.Popen(
                    list(cfg.command),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                )
            except OSError as exc:
                raise BridgeError(f"failed to spawn bridge command: {exc}") from exc
        else:
            try:
                self._sock = socket.create_connection(
                    (cfg.host, cfg.port), timeout=cfg.timeout
                )
            except OSError as exc:
                raise BridgeError(f"failed to connect to bridge: {exc}") from exc
        hello = self._read_exact(len(HELLO))
        if hello != HELLO:
            self.close()
            raise BridgeError(f"bad handshake {hello!r}, expected {HELLO!r}")
        self._started = True

    def close(self) -> None:
        if self._proc is not None:
            for stream in (self._proc.stdin, self._proc.stdout):
                if stream is not None:
                    stream.close()
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None
        self._started = False

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _write(self, data: bytes) -> None:
        try:
            if self._proc is not None:
                assert self._proc.stdin is not None
                self._proc.stdin.write(data)
                self._proc.stdin.flush()
            else:
                assert self._sock is not None
                self._sock.sendall(data)
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise BridgeError(f"bridge write failed: {exc}") from exc

    def _read_exact(self, n: int) -> bytes:
        deadline = time.monotonic() + self.config.timeout
        chunks: list[bytes] = []
        remaining = n
        while remaining > 0:
            budget = deadline - time.monotonic()
            if budget <= 0:
                raise BridgeError(f"bridge read timed out waiting for {remaining} bytes")
            chunk = self._read_some(remaining, budget)
            if not chunk:
                raise BridgeError("bridge closed the connection mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def _read_some(self, n: int, budget: float) -> bytes:
        if self._proc is not None:
            assert self._proc.stdout is not None
            fd = self._proc.stdout.fileno()
            sel = selectors.DefaultSelector()
            sel.register(fd, selectors.EVENT_READ)
            try:
                if not sel.select(timeout=budget):
                    raise BridgeError("bridge read timed out")
                return os.read(fd, n)
            finally:
                sel.close()
        assert self._sock is not None
        self._sock.settimeout(budget)
        try:
            return self._sock.recv(n)
        except socket.timeout as exc:
            raise BridgeError("bridge read timed out") from exc
        except OSError as exc:
            raise BridgeError(f"bridge read failed: {exc}") from exc

    # -- protocol ----------------------------------------------------------

    def ensure_ready(self, alpha_bar: Optional[np.ndarray] = None) -> None:
        """Start the transport; optionally announce the noise schedule."""
        self._start()
        if alpha_bar is not None and self.config.send_schedule and not self._schedule_sent:
            self._write(pack_schedule(np.asarray(alpha_bar)))
            self._schedule_sent = True

    def request(self, t: int, x: np.ndarray) -> np.ndarray:
        """Round-trip one field through the server; returns the same shape."""
        self._start()
        x = np.asarray(x, dtype=np.float64)
        self._write(pack_request(t, x))
        magic = self._read_exact(4)
        if magic != MAGIC_REQUEST:
            raise BridgeError(f"bad response magic {magic!r}")
        (status,) = _U32.unpack(self._read_exact(4))
        if status != STATUS_OK:
            raise BridgeError(f"bridge returned status {status} for timestep {t}")
        count = int(np.prod(x.shape))
        payload = self._read_exact(4 * count)
        values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise BridgeError("bridge returned a non-finite payload")
        return values.reshape(x.shape)


__all__ = [
    "HELLO",
    "MAGIC_CONFIG",
    "MAGIC_REQUEST",
    "STATUS_OK",
    "BridgeClient",
    "BridgeConfig",
    "pack_request",
    "pack_response",
    "pack_schedule",
]
