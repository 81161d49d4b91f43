"""HTTP gateway: program upload, run control, and the live event stream.

Endpoints::

    GET  /                      console page (static assets if provided)
    POST /api/programs          store a ProgramDoc          -> 201 {"run_id"}
    GET  /api/runs              list runs
    POST /api/runs/{id}/start   execute the plan            -> {"state":"running"}
    POST /api/runs/{id}/stop    kill every launched node    -> {"state":"stopped"}
    GET  /api/nodes             fold of the event log per node
    GET  /api/events            Server-Sent Events stream

The gateway owns the node_state event sink (default port 7001): every
event is sequence-numbered into an in-memory log, republished on the
``node_state`` topic, and fanned out to SSE clients.  A client may
resume with the standard ``Last-Event-ID`` header (or ``last_seq``
query parameter); replay is gap-free and duplicates nothing.

Runs are one JSON file each under the data directory, so stored
programs survive a gateway restart.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .behavior import BehaviorEngine, RobotFacade, SchemaViolation, interpret_program
from .channels import SharedTopicChannel
from .master import DEFAULT_BIND as DEFAULT_MASTER, MasterError
from .node import (
    DEFAULT_SINK_BIND,
    EventSink,
    Launcher,
    NodeDescriptor,
    node_start,
)

logger = logging.getLogger("nodeprim.gateway")

MAX_PROGRAM_BYTES = 1 << 20
DEFAULT_HTTP_BIND = ("127.0.0.1", 8080)
RUN_STATES = ("stored", "running", "stopped", "failed")

FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>nodeprim</title></head>
<body><h1>nodeprim gateway</h1>
<p>No console assets are installed. The API lives under <code>/api/</code>:
programs, runs, nodes, and an event stream at <code>/api/events</code>.</p>
</body></html>
"""


@dataclass
class RunRecord:
    run_id: str
    doc: dict
    state: str = "stored"
    created: float = field(default_factory=time.time)

    def to_doc(self) -> dict:
        return {"run_id": self.run_id, "doc": self.doc, "state": self.state, "created": self.created}


class RunStore:
    """One JSON file per run; listable and startable across restarts."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._runs: dict[str, RunRecord] = {}
        for path in sorted(self.data_dir.glob("*.json")):
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
                record = RunRecord(
                    run_id=doc["run_id"], doc=doc["doc"],
                    state=doc.get("state", "stored"), created=doc.get("created", 0.0),
                )
            except (KeyError, ValueError, OSError):
                logger.warning("skipping unreadable run file %s", path)
                continue
            if record.state == "running":
                # The executor died with the previous gateway process.
                record.state = "stopped"
            self._runs[record.run_id] = record

    def create(self, doc: dict) -> RunRecord:
        record = RunRecord(run_id=uuid.uuid4().hex, doc=doc)
        with self._lock:
            self._runs[record.run_id] = record
        self._persist(record)
        return record

    def get(self, run_id: str) -> RunRecord | None:
        with self._lock:
            return self._runs.get(run_id)

    def list(self) -> list[RunRecord]:
        with self._lock:
            return sorted(self._runs.values(), key=lambda r: (r.created, r.run_id))

    def set_state(self, run_id: str, state: str) -> None:
        assert state in RUN_STATES
        with self._lock:
            record = self._runs[run_id]
            record.state = state
        self._persist(record)

    def _persist(self, record: RunRecord) -> None:
        path = self.data_dir / f"{record.run_id}.json"
        path.write_text(json.dumps(record.to_doc(), indent=2), encoding="utf-8")


class RunExecutor:
    """Launches a plan's nodes as child processes plus an in-process engine.

    ``stop`` may arrive while ``start`` is still booting in its background
    thread; the stop flag makes teardown catch whatever boot managed to
    bring up.
    """

    def __init__(self, record: RunRecord, gateway: "GatewayServer"):
        self.record = record
        self.gateway = gateway
        self.launcher = Launcher(
            gateway.master_endpoint, gateway.sink_endpoint, gateway.log
        )
        self.engine: BehaviorEngine | None = None
        self.facade: RobotFacade | None = None
        self._ctx = None
        self._stop = threading.Event()

    def start(self) -> None:
        plan = interpret_program(self.record.doc)
        trigger_endpoints = {
            topic: self.gateway.trigger_channel(topic).endpoint
            for topic in plan.trigger_topics
        }
        try:
            for spec in plan.launches:
                if self._stop.is_set():
                    return
                if spec.kind == "perception" and "trigger_sink" not in spec.args:
                    topic = spec.args.get("trigger_topic", "gesture")
                    endpoint = trigger_endpoints.get(topic)
                    if endpoint is None:
                        endpoint = self.gateway.trigger_channel(topic).endpoint
                    spec.args["trigger_sink"] = f"{endpoint[0]}:{endpoint[1]}"
                self.launcher.launch(spec)
            targets = [robot.name for robot in plan.program.robots]
            if plan.program.rules and targets and not self._stop.is_set():
                name = f"engine-{self.record.run_id[:8]}"
                self._ctx = node_start(NodeDescriptor(name, "cognitive"), self.gateway.sink_endpoint)
                self.facade = RobotFacade(
                    name, targets, self.gateway.master_endpoint, ctx=self._ctx
                )
                self.facade.connect()
                if not self._stop.is_set():
                    self.engine = BehaviorEngine(
                        self.facade, self.gateway.master_endpoint, ctx=self._ctx, node_name=name
                    )
                    for rule in plan.program.rules:
                        self.engine.add_rule(rule)
                    self.engine.start()
        finally:
            if self._stop.is_set():
                self._teardown()

    def stop(self) -> None:
        self._stop.set()
        self._teardown()

    def _teardown(self) -> None:
        if self.engine is not None:
            self.engine.stop()
        elif self._ctx is not None:
            self._ctx.shutdown(manual=True, detail="run stopped")
        if self.facade is not None:
            self.facade.close()
        for handle in self.launcher.live_handles():
            handle.kill()


class GatewayServer:
    def __init__(self, bind=DEFAULT_HTTP_BIND, data_dir="./runs",
                 master_endpoint=DEFAULT_MASTER, sink_bind=DEFAULT_SINK_BIND,
                 heartbeat: float = 15.0, assets_dir=None):
        self.master_endpoint = tuple(master_endpoint)
        self.heartbeat = heartbeat
        self.assets_dir = Path(assets_dir) if assets_dir else None
        self.store = RunStore(data_dir)
        self._executors: dict[str, RunExecutor] = {}
        self._channels: dict[str, SharedTopicChannel] = {}
        self._lock = threading.Lock()
        try:
            self.sink = EventSink(sink_bind, master_endpoint=self.master_endpoint)
        except (MasterError, OSError):
            # No master (or no republish path): keep logging and streaming.
            self.sink = EventSink(sink_bind, master_endpoint=None)
        self._http = _make_server(bind, self)
        self.endpoint = self._http.server_address
        self._thread = threading.Thread(target=lambda: self._http.serve_forever(poll_interval=0.05), daemon=True, name="gateway-http")

    @property
    def log(self):
        return self.sink.log

    @property
    def sink_endpoint(self):
        return self.sink.endpoint

    def start(self) -> "GatewayServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        with self._lock:
            executors = list(self._executors.values())
            self._executors.clear()
        for executor in executors:
            executor.stop()
        self._http.shutdown()
        self._http.server_close()
        for channel in self._channels.values():
            channel.stop()
        self.sink.stop()

    def trigger_channel(self, topic: str) -> SharedTopicChannel:
        with self._lock:
            if topic not in self._channels:
                self._channels[topic] = SharedTopicChannel(topic, self.master_endpoint)
            return self._channels[topic]

    # --- API operations (handlers call these) ---

    def post_program(self, doc) -> RunRecord:
        interpret_program(doc)  # schema gate; raises SchemaViolation
        return self.store.create(doc)

    def start_run(self, run_id: str):
        record = self.store.get(run_id)
        if record is None:
            return None, (404, {"error": "unknown_run", "detail": run_id})
        if record.state != "stored":
            return None, (409, {"error": "wrong_state", "detail": f"run is {record.state}"})
        executor = RunExecutor(record, self)
        with self._lock:
            self._executors[run_id] = executor
        self.store.set_state(run_id, "running")

        def boot():
            try:
                executor.start()
            except Exception:
                logger.exception("run %s failed to start", run_id)
                executor.stop()
                self.store.set_state(run_id, "failed")
                with self._lock:
                    self._executors.pop(run_id, None)

        threading.Thread(target=boot, daemon=True, name=f"run:{run_id[:8]}").start()
        return record, None

    def stop_run(self, run_id: str):
        record = self.store.get(run_id)
        if record is None:
            return None, (404, {"error": "unknown_run", "detail": run_id})
        if record.state != "running":
            return None, (409, {"error": "wrong_state", "detail": f"run is {record.state}"})
        with self._lock:
            executor = self._executors.pop(run_id, None)
        if executor is not None:
            executor.stop()
        self.store.set_state(run_id, "stopped")
        return record, None


def _make_server(bind, gateway: GatewayServer) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("http: " + fmt, *args)

        def _send_json(self, status: int, doc: dict) -> None:
            body = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> bytes | None:
            length = int(self.headers.get("Content-Length", 0))
            if length > MAX_PROGRAM_BYTES:
                self._send_json(413, {"error": "oversize", "detail": f"body over {MAX_PROGRAM_BYTES} bytes"})
                return None
            return self.rfile.read(length)

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/api/events":
                return self._stream_events(url)
            if url.path == "/api/runs":
                runs = [
                    {"run_id": r.run_id, "state": r.state, "created": r.created}
                    for r in gateway.store.list()
                ]
                return self._send_json(200, {"runs": runs})
            if url.path == "/api/nodes":
                table = gateway.log.fold()
                return self._send_json(200, {"nodes": [table[k] for k in sorted(table)]})
            return self._serve_asset(url.path)

        def do_POST(self):
            url = urlparse(self.path)
            if url.path == "/api/programs":
                body = self._read_body()
                if body is None:
                    return
                try:
                    doc = json.loads(body)
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    return self._send_json(400, {"error": "bad_json", "detail": str(exc)})
                try:
                    record = gateway.post_program(doc)
                except SchemaViolation as exc:
                    return self._send_json(
                        400, {"error": "schema_violation", "path": exc.path, "detail": str(exc)}
                    )
                return self._send_json(201, {"run_id": record.run_id, "state": record.state})
            parts = url.path.strip("/").split("/")
            if len(parts) == 4 and parts[:2] == ["api", "runs"] and parts[3] in ("start", "stop"):
                self._read_body()  # drain
                run_id, op = parts[2], parts[3]
                record, error = (
                    gateway.start_run(run_id) if op == "start" else gateway.stop_run(run_id)
                )
                if error is not None:
                    return self._send_json(error[0], error[1])
                return self._send_json(200, {"run_id": record.run_id, "state": record.state})
            return self._send_json(404, {"error": "not_found", "detail": url.path})

        def _stream_events(self, url) -> None:
            since = 0
            query = parse_qs(url.query)
            if "last_seq" in query:
                try:
                    since = int(query["last_seq"][0])
                except ValueError:
                    pass
            header = self.headers.get("Last-Event-ID")
            if header is not None:
                try:
                    since = max(since, int(header))
                except ValueError:
                    pass
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "keep-alive")
            self.end_headers()
            seq = since
            try:
                while True:
                    entries = gateway.log.wait_newer(seq, timeout=gateway.heartbeat)
                    if not entries:
                        self.wfile.write(b": heartbeat\n\n")
                        self.wfile.flush()
                        continue
                    for entry in entries:
                        data = json.dumps(entry.event.to_doc(), separators=(",", ":"))
                        sse = f"event: node_state\ndata: {data}\nid: {entry.seq}\n\n"
                        self.wfile.write(sse.encode("utf-8"))
                        seq = entry.seq
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError, OSError):
                return

        def _serve_asset(self, path: str) -> None:
            if gateway.assets_dir is None:
                if path in ("/", "/index.html"):
                    body = FALLBACK_PAGE.encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Type", "text/html; charset=utf-8")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
                return self._send_json(404, {"error": "not_found", "detail": path})
            name = path.lstrip("/") or "index.html"
            target = (gateway.assets_dir / name).resolve()
            if not str(target).startswith(str(gateway.assets_dir.resolve())) or not target.is_file():
                return self._send_json(404, {"error": "not_found", "detail": path})
            body = target.read_bytes()
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    class Server(ThreadingHTTPServer):
        daemon_threads = True
        allow_reuse_address = True

    return Server(tuple(bind), Handler)
