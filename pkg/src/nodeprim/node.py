"""Node model: four typed roles, lifecycle events, launching, supervision.

Every node reports lifecycle events on the well-known ``node_state``
topic.  Since a topic has a single binder, nodes do not publish there
directly: they send one JSON event per line to the event sink (default
port 7001), which appends to the gateway's event log and republishes on
the real topic.  The launcher spawns node processes and a supervisor
watcher guarantees exactly one shutdown event per launched node: the
node's own announcement if it made one, otherwise a synthesized
``shutdown_manual`` (we killed it) or ``shutdown_unexpected`` (it died
on its own).
"""

from __future__ import annotations

import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field

from .channels import LineSinkServer, SinkClient
from .clock import WALL
from .pubsub import Publisher

NODE_KINDS = ("sensory", "perception", "cognitive", "action")
PRIMITIVE_LEVELS = ("hardware", "algorithmic", "social", "emergent", "control")
EVENT_KINDS = (
    "started",
    "executing",
    "robot_connected",
    "robot_connection_failed",
    "shutdown_manual",
    "shutdown_unexpected",
)
DEFAULT_LEVEL = {
    "sensory": "hardware",
    "perception": "algorithmic",
    "action": "social",
    "cognitive": "control",
}
NODE_STATE_TOPIC = "node_state"
DEFAULT_SINK_BIND = ("127.0.0.1", 7001)
SUPERVISE_POLL_SECONDS = 0.1


class DuplicateName(Exception):
    pass


class SpawnFailure(Exception):
    pass


@dataclass(frozen=True)
class NodeDescriptor:
    name: str
    kind: str
    primitive_level: str | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("node name is empty")
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.primitive_level is None:
            object.__setattr__(self, "primitive_level", DEFAULT_LEVEL[self.kind])
        elif self.primitive_level not in PRIMITIVE_LEVELS:
            raise ValueError(f"unknown primitive level {self.primitive_level!r}")


@dataclass(frozen=True)
class NodeStateEvent:
    node: str
    kind: str
    event: str
    detail: str
    stamp: float

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.event not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.event!r}")

    def to_doc(self) -> dict:
        return {
            "node": self.node,
            "kind": self.kind,
            "event": self.event,
            "detail": self.detail,
            "stamp": self.stamp,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "NodeStateEvent":
        if not isinstance(doc, dict):
            raise ValueError("event is not an object")
        node = doc.get("node")
        detail = doc.get("detail", "")
        stamp = doc.get("stamp")
        if not isinstance(node, str) or not node:
            raise ValueError("event has no node name")
        if not isinstance(detail, str):
            raise ValueError("event detail is not text")
        if not isinstance(stamp, (int, float)) or isinstance(stamp, bool):
            raise ValueError("event stamp is not a number")
        return cls(node=node, kind=doc.get("kind"), event=doc.get("event"),
                   detail=detail, stamp=float(stamp))


# Live node names, one registry per process.  Enforces name uniqueness
# for contexts created in this process; the launcher separately enforces
# it across the children it spawns.
_live_lock = threading.Lock()
_live_names: set[str] = set()


class NodeContext:
    """A running node's handle for publishing lifecycle events."""

    def __init__(self, desc: NodeDescriptor, sink_endpoint, clock=WALL):
        self.desc = desc
        self._clock = clock
        with _live_lock:
            if desc.name in _live_names:
                raise DuplicateName(f"a node named {desc.name!r} is already live")
            _live_names.add(desc.name)
        try:
            self._sink = SinkClient(sink_endpoint, clock=clock)
        except OSError:
            with _live_lock:
                _live_names.discard(desc.name)
            raise
        self._shutdown_sent = False

    def publish_state(self, event: str, detail: str = "") -> None:
        """Fire-and-forget lifecycle event; never raises to the caller."""
        ev = NodeStateEvent(
            node=self.desc.name,
            kind=self.desc.kind,
            event=event,
            detail=detail,
            stamp=self._clock.now(),
        )
        try:
            self._sink.send(ev.to_doc())
        except OSError:
            pass

    def shutdown(self, manual: bool = True, detail: str = "") -> None:
        if not self._shutdown_sent:
            self._shutdown_sent = True
            self.publish_state("shutdown_manual" if manual else "shutdown_unexpected", detail)
        self.close()

    def close(self) -> None:
        with _live_lock:
            _live_names.discard(self.desc.name)
        self._sink.close()


def node_start(desc: NodeDescriptor, sink_endpoint, clock=WALL, detail: str = "") -> NodeContext:
    """Bring a node online: connect to the event sink and announce ``started``."""
    ctx = NodeContext(desc, sink_endpoint, clock=clock)
    ctx.publish_state("started", detail)
    return ctx


@dataclass(frozen=True)
class EventLogEntry:
    seq: int
    event: NodeStateEvent


class EventLog:
    """Append-only, sequence-numbered log of node state events."""

    def __init__(self):
        self._cond = threading.Condition()
        self._entries: list[EventLogEntry] = []

    def append(self, event: NodeStateEvent) -> EventLogEntry:
        with self._cond:
            entry = EventLogEntry(seq=len(self._entries) + 1, event=event)
            self._entries.append(entry)
            self._cond.notify_all()
            return entry

    def entries(self, since_seq: int = 0) -> list[EventLogEntry]:
        with self._cond:
            return self._entries[since_seq:]

    def __len__(self) -> int:
        with self._cond:
            return len(self._entries)

    def wait_newer(self, seq: int, timeout: float | None = None) -> list[EventLogEntry]:
        """Block until entries past seq exist (or timeout); return them."""
        with self._cond:
            self._cond.wait_for(lambda: len(self._entries) > seq, timeout)
            return self._entries[seq:]

    def has_shutdown(self, node: str) -> bool:
        with self._cond:
            return any(
                e.event.node == node and e.event.event.startswith("shutdown_")
                for e in self._entries
            )

    def fold(self) -> dict[str, dict]:
        """Last event per node, keyed by node name."""
        table: dict[str, dict] = {}
        for entry in self.entries():
            ev = entry.event
            table[ev.node] = {
                "name": ev.node,
                "kind": ev.kind,
                "event": ev.event,
                "detail": ev.detail,
                "stamp": ev.stamp,
            }
        return table


class EventSink:
    """The ``node_state`` binder: line-JSON in, log append + topic republish out."""

    def __init__(self, bind=DEFAULT_SINK_BIND, master_endpoint=None, clock=WALL,
                 log: EventLog | None = None):
        self.log = log if log is not None else EventLog()
        self._publisher = None
        if master_endpoint is not None:
            self._publisher = Publisher(
                NODE_STATE_TOPIC, "event_sink", "json", master_endpoint, clock=clock
            )
        self._server = LineSinkServer(bind, self._on_event, clock=clock, name="event-sink")
        self.endpoint = self._server.endpoint

    def _on_event(self, doc: dict) -> None:
        try:
            event = NodeStateEvent.from_doc(doc)
        except ValueError:
            return
        self.log.append(event)
        if self._publisher is not None:
            self._publisher.send_info(event.to_doc())

    def stop(self) -> None:
        self._server.stop()
        if self._publisher is not None:
            self._publisher.close()


@dataclass
class LaunchSpec:
    kind: str
    name: str
    args: dict = field(default_factory=dict)
    executable: str = ""  # empty = the built-in node runner

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if not self.name:
            raise ValueError("launch spec has no node name")


@dataclass
class TerminationReport:
    name: str
    exit_code: int | None
    killed: bool
    synthesized_event: str | None  # event the supervisor emitted on the node's behalf


class NodeHandle:
    def __init__(self, spec: LaunchSpec, proc: subprocess.Popen):
        self.spec = spec
        self.proc = proc
        self.killed = False
        self._report: TerminationReport | None = None
        self._done = threading.Event()

    def kill(self) -> None:
        self.killed = True
        self.proc.kill()

    def wait(self, timeout: float | None = None) -> TerminationReport:
        if not self._done.wait(timeout):
            raise TimeoutError(f"node {self.spec.name!r} still running")
        return self._report

    def _finish(self, report: TerminationReport) -> None:
        self._report = report
        self._done.set()


class Launcher:
    """Spawns node processes and supervises them to exactly one shutdown event."""

    def __init__(self, master_endpoint, sink_endpoint, log: EventLog,
                 poll_seconds: float = SUPERVISE_POLL_SECONDS, announce_grace: float = 0.5):
        self.master_endpoint = tuple(master_endpoint)
        self.sink_endpoint = tuple(sink_endpoint)
        self.log = log
        self.poll_seconds = poll_seconds
        self.announce_grace = announce_grace
        self._lock = threading.Lock()
        self._live: dict[str, NodeHandle] = {}

    def _command(self, spec: LaunchSpec) -> list[str]:
        args = [
            "--kind", spec.kind,
            "--name", spec.name,
            "--master", f"{self.master_endpoint[0]}:{self.master_endpoint[1]}",
            "--sink", f"{self.sink_endpoint[0]}:{self.sink_endpoint[1]}",
        ]
        for key in sorted(spec.args):
            args += ["--arg", f"{key}={spec.args[key]}"]
        if spec.executable:
            return [spec.executable] + args
        return [sys.executable, "-m", "nodeprim.node_runner"] + args

    def launch(self, spec: LaunchSpec) -> NodeHandle:
        with self._lock:
            if spec.name in self._live:
                raise DuplicateName(f"a node named {spec.name!r} is already launched")
        try:
            proc = subprocess.Popen(self._command(spec))
        except OSError as exc:
            raise SpawnFailure(f"cannot launch {spec.name!r}: {exc}") from exc
        handle = NodeHandle(spec, proc)
        with self._lock:
            self._live[spec.name] = handle
        threading.Thread(
            target=self._watch, args=(handle,), daemon=True, name=f"supervise:{spec.name}"
        ).start()
        return handle

    def _watch(self, handle: NodeHandle) -> None:
        while handle.proc.poll() is None:
            time.sleep(self.poll_seconds)
        # Give the child's final event line time to land before deciding
        # whether the node announced its own shutdown.
        end = time.monotonic() + self.announce_grace
        announced = self.log.has_shutdown(handle.spec.name)
        while not announced and time.monotonic() < end:
            time.sleep(0.02)
            announced = self.log.has_shutdown(handle.spec.name)
        synthesized = None
        if not announced:
            synthesized = "shutdown_manual" if handle.killed else "shutdown_unexpected"
            detail = "killed by supervisor" if handle.killed else (
                f"exited with code {handle.proc.returncode} without announcing shutdown"
            )
            self._emit_for(handle.spec, synthesized, detail)
            # Report only once the event is observable: callers treat a
            # finished supervision as "the log now shows the shutdown".
            visible_end = time.monotonic() + 2.0
            while not self.log.has_shutdown(handle.spec.name) and time.monotonic() < visible_end:
                time.sleep(0.01)
        with self._lock:
            self._live.pop(handle.spec.name, None)
        handle._finish(TerminationReport(
            name=handle.spec.name,
            exit_code=handle.proc.returncode,
            killed=handle.killed,
            synthesized_event=synthesized,
        ))

    def _emit_for(self, spec: LaunchSpec, event: str, detail: str) -> None:
        stamp = time.time()
        doc = NodeStateEvent(spec.name, spec.kind, event, detail, stamp).to_doc()
        try:
            client = SinkClient(self.sink_endpoint)
            client.send(doc)
            client.close()
        except OSError:
            self.log.append(NodeStateEvent.from_doc(doc))

    def supervise(self, handle: NodeHandle, timeout: float | None = None) -> TerminationReport:
        """Wait for the handle's watcher to deliver its termination report."""
        return handle.wait(timeout)

    def live_handles(self) -> list[NodeHandle]:
        with self._lock:
            return list(self._live.values())

    def stop_all(self, timeout: float = 10.0) -> list[TerminationReport]:
        handles = self.live_handles()
        for handle in handles:
            handle.kill()
        return [handle.wait(timeout) for handle in handles]
