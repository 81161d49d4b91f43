"""Name server: maps topics to data-plane endpoints and matches pub/sub.

Control protocol is newline-delimited JSON over TCP, one request and one
reply per line::

    {"op":"register","topic":T,"role":"pub"|"sub","node":N,"encoding":"json"|"string"}
    -> {"status":"ok","ip":I,"port":P,"encoding":E,"matched":B}
    -> {"status":"error","error":CODE,"detail":D}
    {"op":"dump"} -> {"status":"ok","topics":[...]}

The first registration of a topic assigns it a fresh port from the pool;
every later registration of the same topic returns the same endpoint.
Exactly one publisher node may bind a topic; it owns the data-plane
socket and subscribers connect to it.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass, field

from . import wire

DEFAULT_BIND = ("127.0.0.1", 7000)
DEFAULT_PORT_POOL = range(9000, 10000)


class MasterError(Exception):
    code = "error"


class BindFailure(MasterError):
    code = "bind_failure"


class PoolExhausted(MasterError):
    code = "pool_exhausted"


class EncodingConflict(MasterError):
    code = "encoding_conflict"


class SecondBinder(MasterError):
    code = "second_binder"


class BadRequest(MasterError):
    code = "bad_request"


class MasterUnreachable(MasterError):
    code = "master_unreachable"


_ERROR_BY_CODE = {
    cls.code: cls for cls in (PoolExhausted, EncodingConflict, SecondBinder, BadRequest)
}


@dataclass
class TopicRecord:
    topic: str
    ip: str
    port: int
    encoding: str = "json"
    encoding_fixed: bool = False  # set once the first publisher declares it
    publishers: set = field(default_factory=set)
    subscribers: set = field(default_factory=set)

    @property
    def matched(self) -> bool:
        return bool(self.publishers) and bool(self.subscribers)

    def to_doc(self) -> dict:
        return {
            "topic": self.topic,
            "ip": self.ip,
            "port": self.port,
            "encoding": self.encoding,
            "publishers": sorted(self.publishers),
            "subscribers": sorted(self.subscribers),
            "matched": self.matched,
        }


class Master:
    """The name server.  State is applied under one lock, so any
    interleaving of concurrent registrations is equivalent to some
    serial order."""

    def __init__(self, bind=DEFAULT_BIND, port_pool=DEFAULT_PORT_POOL):
        self.bind = bind
        self._pool = list(port_pool)
        self._pool_next = 0
        self._lock = threading.Lock()
        self._topics: dict[str, TopicRecord] = {}
        self._server: socketserver.ThreadingTCPServer | None = None
        self._thread: threading.Thread | None = None

    # --- state machine (in-process API; the TCP handler calls these) ---

    def register(self, topic: str, role: str, node: str, encoding: str | None = None) -> dict:
        try:
            wire.validate_topic(topic)
        except wire.InvalidTopic as exc:
            raise BadRequest(str(exc)) from exc
        if role not in ("pub", "sub"):
            raise BadRequest(f"role must be pub or sub, got {role!r}")
        if not node:
            raise BadRequest("node name is empty")
        if encoding is not None and encoding not in ("json", "string"):
            raise BadRequest(f"encoding must be json or string, got {encoding!r}")
        if role == "pub" and encoding is None:
            raise BadRequest("publisher registration requires an encoding")

        with self._lock:
            rec = self._topics.get(topic)
            if rec is None:
                rec = TopicRecord(
                    topic=topic,
                    ip=self.bind[0],
                    port=self._allocate_port(),
                    encoding=encoding or "json",
                )
                self._topics[topic] = rec
            if role == "pub":
                if rec.publishers and node not in rec.publishers:
                    raise SecondBinder(
                        f"topic {topic!r} is already published by {sorted(rec.publishers)[0]!r}"
                    )
                if rec.encoding_fixed and encoding != rec.encoding:
                    raise EncodingConflict(
                        f"topic {topic!r} is {rec.encoding}, publisher declared {encoding}"
                    )
                rec.encoding = encoding
                rec.encoding_fixed = True
                rec.publishers.add(node)
            else:
                rec.subscribers.add(node)
            return {
                "status": "ok",
                "ip": rec.ip,
                "port": rec.port,
                "encoding": rec.encoding,
                "matched": rec.matched,
            }

    def dump_state(self) -> list[dict]:
        with self._lock:
            return [self._topics[t].to_doc() for t in sorted(self._topics)]

    def _allocate_port(self) -> int:
        # lock held.  A pool port may be squatted by an unrelated socket
        # (ephemeral allocations can land anywhere), so probe-bind before
        # handing it out; the record's endpoint never changes afterwards.
        used = {rec.port for rec in self._topics.values()}
        while self._pool_next < len(self._pool):
            port = self._pool[self._pool_next]
            self._pool_next += 1
            if port in used:
                continue
            try:
                probe = socket.create_server((self.bind[0], port))
                probe.close()
            except OSError:
                continue
            return port
        raise PoolExhausted(f"no free port left in pool of {len(self._pool)}")

    # --- TCP front end ---

    def start(self) -> "Master":
        master = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for raw in self.rfile:
                    reply = master._handle_line(raw)
                    try:
                        self.wfile.write(json.dumps(reply).encode("utf-8") + b"\n")
                        self.wfile.flush()
                    except (BrokenPipeError, ConnectionResetError):
                        return

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        try:
            self._server = Server(self.bind, Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind master at {self.bind[0]}:{self.bind[1]}: {exc}") from exc
        self.bind = self._server.server_address
        self._thread = threading.Thread(target=lambda: self._server.serve_forever(poll_interval=0.05), daemon=True, name="master")
        self._thread.start()
        return self

    def _handle_line(self, raw: bytes) -> dict:
        try:
            req = json.loads(raw)
            if not isinstance(req, dict):
                raise BadRequest("request is not a JSON object")
            op = req.get("op")
            if op == "register":
                return self.register(
                    topic=req.get("topic", ""),
                    role=req.get("role", ""),
                    node=req.get("node", ""),
                    encoding=req.get("encoding"),
                )
            if op == "dump":
                return {"status": "ok", "topics": self.dump_state()}
            raise BadRequest(f"unknown op {op!r}")
        except MasterError as exc:
            return {"status": "error", "error": exc.code, "detail": str(exc)}
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return {"status": "error", "error": "bad_request", "detail": f"bad JSON: {exc}"}

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    @property
    def endpoint(self) -> tuple[str, int]:
        return self.bind


def serve(bind=DEFAULT_BIND, port_pool=DEFAULT_PORT_POOL) -> Master:
    """Start a master in background threads and return it."""
    return Master(bind, port_pool).start()


class MasterClient:
    """One-shot control-channel client: one connection per request."""

    def __init__(self, endpoint=DEFAULT_BIND, connect_timeout: float = 2.0):
        self.endpoint = tuple(endpoint)
        self.connect_timeout = connect_timeout

    def _call(self, request: dict) -> dict:
        try:
            with socket.create_connection(self.endpoint, timeout=self.connect_timeout) as sock:
                sock.sendall(json.dumps(request).encode("utf-8") + b"\n")
                with sock.makefile("rb") as stream:
                    line = stream.readline()
        except OSError as exc:
            raise MasterUnreachable(
                f"master at {self.endpoint[0]}:{self.endpoint[1]} unreachable: {exc}"
            ) from exc
        if not line:
            raise MasterUnreachable("master closed the control connection")
        reply = json.loads(line)
        if reply.get("status") == "error":
            err = _ERROR_BY_CODE.get(reply.get("error"), MasterError)
            raise err(reply.get("detail", ""))
        return reply

    def register(self, topic: str, role: str, node: str, encoding: str | None = None) -> dict:
        req = {"op": "register", "topic": topic, "role": role, "node": node}
        if encoding is not None:
            req["encoding"] = encoding
        return self._call(req)

    def dump(self) -> list[dict]:
        return self._call({"op": "dump"})["topics"]
