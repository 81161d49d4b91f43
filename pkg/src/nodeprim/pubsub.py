"""Publisher and Subscriber endpoints for the topic data plane.

A Publisher registers its topic with the master, binds the assigned
endpoint, and fans frames out to every connected subscriber channel
(fire-and-forget: no subscribers means the message is dropped, and
messages sent before a subscriber's channel is up are lost - classic
slow-joiner semantics).  A Subscriber registers, connects to the
publisher's endpoint (retrying until it binds), and buffers decoded
payloads in arrival order for ``listen_info``.

Connection management always runs on real time; only the receive
waits in ``listen_info`` consume injected-clock time, so the virtual
test harness stays deterministic.
"""

from __future__ import annotations

import socket
import threading
import time
from collections import deque

from . import wire
from .clock import WALL
from .master import BindFailure, MasterClient

CONNECT_RETRY_SECONDS = 0.25
DEFAULT_TIMEOUT_MS = 100


class EncodingMismatch(Exception):
    pass


class ChannelClosed(Exception):
    """The publisher side is gone and the receive queue is drained."""


class Publisher:
    def __init__(self, topic, node_name, encoding, master_endpoint, clock=WALL, connect_timeout=2.0):
        wire.validate_topic(topic)
        if encoding not in ("json", "string"):
            raise ValueError(f"encoding must be json or string, got {encoding!r}")
        self.topic = topic
        self.node_name = node_name
        self.encoding = encoding
        self._clock = clock
        reply = MasterClient(master_endpoint, connect_timeout).register(
            topic, "pub", node_name, encoding
        )
        self.endpoint = (reply["ip"], reply["port"])
        try:
            self._listener = socket.create_server(self.endpoint, backlog=16, reuse_port=False)
        except OSError as exc:
            raise BindFailure(f"cannot bind data plane at {self.endpoint}: {exc}") from exc
        self._channels: set[socket.socket] = set()
        self._channels_lock = threading.Lock()
        self._closed = False
        self._accepter = threading.Thread(
            target=self._accept_loop, daemon=True, name=f"pub-accept:{topic}"
        )
        self._accepter.start()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._channels_lock:
                self._channels.add(conn)

    @property
    def channel_count(self) -> int:
        with self._channels_lock:
            return len(self._channels)

    def wait_for_channels(self, n: int, timeout: float = 5.0) -> bool:
        """Real-time wait until at least n subscriber channels are connected.

        This is the synchronization seam tests use to defeat slow-joiner
        message loss before their first send.
        """
        end = time.monotonic() + timeout
        while self.channel_count < n:
            if time.monotonic() >= end:
                return False
            time.sleep(0.01)
        return True

    def send_info(self, payload) -> None:
        """Send one Document (dict) or RawText (str) to all connected channels."""
        if self._closed:
            raise ChannelClosed("publisher closed")
        if self.encoding == "json" and not isinstance(payload, dict):
            raise EncodingMismatch(f"topic {self.topic!r} is json, payload is {type(payload).__name__}")
        if self.encoding == "string" and not isinstance(payload, str):
            raise EncodingMismatch(f"topic {self.topic!r} is string, payload is {type(payload).__name__}")
        frame = wire.encode_frame(self.topic, wire.encode_payload(wire.Message(self.topic, payload)))
        with self._channels_lock:
            channels = list(self._channels)
        dead = []
        for conn in channels:
            self._clock.work_started()
            try:
                conn.sendall(frame)
            except OSError:
                self._clock.work_finished()
                dead.append(conn)
        if dead:
            with self._channels_lock:
                for conn in dead:
                    self._channels.discard(conn)
                    try:
                        conn.close()
                    except OSError:
                        pass

    def close(self) -> None:
        self._closed = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._channels_lock:
            for conn in self._channels:
                try:
                    conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                try:
                    conn.close()
                except OSError:
                    pass
            self._channels.clear()


class Subscriber:
    """Receives one topic's messages in arrival order.

    The receive queue is unbounded: a subscriber that never drains a
    busy topic grows without limit, so long-running consumers must keep
    reading (or accept the memory cost).
    """

    def __init__(
        self,
        topic,
        node_name,
        master_endpoint,
        clock=WALL,
        default_timeout_ms=DEFAULT_TIMEOUT_MS,
        connect_timeout=2.0,
    ):
        wire.validate_topic(topic)
        self.topic = topic
        self.node_name = node_name
        self.default_timeout_ms = default_timeout_ms
        self._clock = clock
        self._master = MasterClient(master_endpoint, connect_timeout)
        reply = self._master.register(topic, "sub", node_name)
        self.endpoint = (reply["ip"], reply["port"])
        self.encoding = reply["encoding"]
        self._queue: deque = deque()
        self._dropped = 0
        self._eof = False      # a live connection ended
        self._closed = False   # close() was called locally
        self._sock: socket.socket | None = None
        self.connected = False
        self._connector = threading.Thread(
            target=self._connect_loop, daemon=True, name=f"sub-connect:{topic}"
        )
        self._connector.start()

    def _connect_loop(self):
        # Retry until the publisher binds; re-register afterwards so the
        # encoding reflects what the publisher actually declared.
        while not self._closed:
            try:
                sock = socket.create_connection(self.endpoint, timeout=2.0)
            except OSError:
                time.sleep(CONNECT_RETRY_SECONDS)
                continue
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.settimeout(None)
            try:
                self.encoding = self._master.register(self.topic, "sub", self.node_name)["encoding"]
            except Exception:
                pass
            self._sock = sock
            self.connected = True
            self._read_loop(sock)
            return

    def _read_loop(self, sock):
        stream = sock.makefile("rb")
        while True:
            try:
                got = wire.read_frame(stream)
            except (wire.WireError, OSError):
                got = None
            if got is None:
                break
            topic, payload_bytes = got
            try:
                if topic != self.topic:
                    raise wire.WireError("foreign topic")
                payload = wire.decode_payload(payload_bytes, self.encoding)
            except wire.WireError:
                with self._clock.lock():
                    self._dropped += 1
                    self._clock.work_finished()
                continue
            with self._clock.lock():
                self._queue.append(payload)
                self._clock.kick()
                self._clock.work_finished()
        with self._clock.lock():
            self._eof = True
            self.connected = False
            self._clock.kick()

    def listen_info(self, block: bool = True, timeout_ms: int | None = None):
        """Read the next payload.

        Blocking mode waits indefinitely and returns ``(True, payload)``.
        Non-blocking mode waits at most ``timeout_ms`` (default 100) and
        returns ``(False, None)`` on timeout.  Raises ``ChannelClosed``
        once the publisher is gone and the queue is drained - that is an
        error, not a timeout.
        """
        def ready():
            return bool(self._queue) or self._eof or self._closed

        if block:
            self._clock.wait_for(ready)
        else:
            timeout = (self.default_timeout_ms if timeout_ms is None else timeout_ms) / 1000.0
            self._clock.wait_for(ready, timeout)
        with self._clock.lock():
            if self._queue:
                return True, self._queue.popleft()
            if self._eof or self._closed:
                raise ChannelClosed(f"no publisher left on {self.topic!r}")
        return False, None

    @property
    def pending(self) -> int:
        with self._clock.lock():
            return len(self._queue)

    @property
    def dropped(self) -> int:
        return self._dropped

    def close(self) -> None:
        with self._clock.lock():
            self._closed = True
            self._clock.kick()
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._sock.close()
            except OSError:
                pass
