"""Shared-topic channels: many writers funneled through one topic binder.

The data plane allows exactly one publisher node per topic, but some
topics (``node_state``, the gesture trigger topic) have many logical
writers.  The workaround is a sink: one process binds the topic with a
normal Publisher and accepts contributions over a TCP side channel, one
JSON object per line.  Every line is forwarded onto the topic.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading

from .clock import WALL
from .pubsub import Publisher


class LineSinkServer:
    """TCP server reading one JSON object per line from each client."""

    def __init__(self, bind, handler, clock=WALL, name="sink"):
        self._handler = handler
        self._clock = clock
        sink = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for raw in self.rfile:
                    try:
                        obj = json.loads(raw)
                    except (json.JSONDecodeError, UnicodeDecodeError):
                        obj = None
                    try:
                        if isinstance(obj, dict):
                            sink._handler(obj)
                    finally:
                        sink._clock.work_finished()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server(tuple(bind), Handler)
        self.endpoint = self._server.server_address
        self._thread = threading.Thread(target=lambda: self._server.serve_forever(poll_interval=0.05), daemon=True, name=name)
        self._thread.start()

    def stop(self):
        self._server.shutdown()
        self._server.server_close()


class SinkClient:
    """Writer side: a persistent connection sending one JSON line per event."""

    def __init__(self, endpoint, clock=WALL, connect_timeout=2.0):
        self.endpoint = tuple(endpoint)
        self._clock = clock
        self._sock = socket.create_connection(self.endpoint, timeout=connect_timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock.settimeout(None)
        self._lock = threading.Lock()

    def send(self, obj: dict) -> None:
        line = json.dumps(obj, separators=(",", ":")) + "\n"
        self._clock.work_started()
        try:
            with self._lock:
                self._sock.sendall(line.encode("utf-8"))
        except OSError:
            self._clock.work_finished()
            raise

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class SharedTopicChannel:
    """Binds one topic and republishes every sink line onto it."""

    def __init__(self, topic, master_endpoint, bind=("127.0.0.1", 0), clock=WALL, node_name=None):
        self.topic = topic
        self.publisher = Publisher(
            topic, node_name or f"channel:{topic}", "json", master_endpoint, clock=clock
        )
        self._sink = LineSinkServer(bind, self._forward, clock=clock, name=f"chan:{topic}")
        self.endpoint = self._sink.endpoint

    def _forward(self, doc: dict) -> None:
        self.publisher.send_info(doc)

    def stop(self) -> None:
        self._sink.stop()
        self.publisher.close()
