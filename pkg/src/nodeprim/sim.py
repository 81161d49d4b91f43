"""Simulated robot and gesture pipeline.

Stands in for the hardware side of the gesture application: a scripted
sensory replay publishes ground-truth gesture labels, five perceptual
classifier nodes (one per gesture) sample a configurable confusion
model and raise triggers, and a simulated robot action node executes
behavior specs, recording everything in a transcript that scenario
tests compare byte-for-byte.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field

from .clock import WALL
from .node import NodeDescriptor, node_start
from .channels import SinkClient
from .pubsub import ChannelClosed, Publisher, Subscriber

GESTURE_LABELS = ("katana", "batting", "hand_up", "karate", "stretch_up")
TRUTH_TOPIC = "gesture_truth"
TRIGGER_TOPIC = "gesture"
REPLAY_EXIT_DELAY = 1.0


class ScriptOrder(Exception):
    pass


@dataclass
class SimRobotConfig:
    name: str
    speech_rate: float = 0.06       # seconds per character
    posture_duration: float = 1.0
    animation_duration: float = 2.0

    def __post_init__(self):
        if min(self.speech_rate, self.posture_duration, self.animation_duration) < 0:
            raise ValueError("durations must be >= 0")


def cmd_topic(robot: str) -> str:
    return f"robot/{robot}/cmd"


def res_topic(robot: str) -> str:
    return f"robot/{robot}/res"


class Transcript:
    """Ordered start/end records of every action a sim robot executed."""

    def __init__(self, clock=WALL):
        self._clock = clock
        self._entries: list[dict] = []

    def record(self, stamp, robot, primitive, args, mark, action_id) -> None:
        entry = {
            "stamp": stamp,
            "robot": robot,
            "primitive": primitive,
            "args": args,
            "mark": mark,
            "id": action_id,
        }
        with self._clock.lock():
            self._entries.append(entry)
            self._clock.kick()

    def entries(self) -> list[dict]:
        with self._clock.lock():
            return list(self._entries)

    def completed(self) -> int:
        # Callable under the clock lock (harness stop predicates).
        return sum(1 for e in self._entries if e["mark"] == "end")

    def to_json(self) -> str:
        return json.dumps(self.entries(), indent=2, sort_keys=True)


class SimRobotNode:
    """Action node: executes say/posture/animation/wait specs in sim time."""

    def __init__(self, cfg: SimRobotConfig, master_endpoint, sink_endpoint,
                 clock=WALL, transcript: Transcript | None = None):
        self.cfg = cfg
        self._clock = clock
        self.transcript = transcript if transcript is not None else Transcript(clock)
        self._master = master_endpoint
        self._sink = sink_endpoint
        self._ctx = None
        self._cmd = None
        self._res = None
        self._thread = None
        self._stopping = False

    def start(self) -> "SimRobotNode":
        self._cmd = Subscriber(cmd_topic(self.cfg.name), self.cfg.name, self._master, clock=self._clock)
        self._res = Publisher(res_topic(self.cfg.name), self.cfg.name, "json", self._master, clock=self._clock)
        self._ctx = node_start(NodeDescriptor(self.cfg.name, "action"), self._sink, clock=self._clock)
        self._thread = threading.Thread(target=self._run, daemon=True, name=f"sim-robot:{self.cfg.name}")
        self._thread.start()
        return self

    def ready(self) -> bool:
        return self._cmd is not None and self._cmd.connected

    def _duration(self, primitive: str, args: dict) -> float:
        if primitive == "say":
            return len(args["text"]) * self.cfg.speech_rate
        if primitive == "posture":
            return self.cfg.posture_duration
        if primitive == "animation":
            return self.cfg.animation_duration
        return float(args["seconds"])  # wait

    def _check(self, doc) -> str | None:
        primitive = doc.get("primitive")
        args = doc.get("args")
        if not isinstance(args, dict):
            return "spec has no args object"
        if primitive == "say":
            if not isinstance(args.get("text"), str):
                return "say needs a text argument"
        elif primitive in ("posture", "animation"):
            if not isinstance(args.get("name"), str):
                return f"{primitive} needs a name argument"
        elif primitive == "wait":
            seconds = args.get("seconds")
            if not isinstance(seconds, (int, float)) or isinstance(seconds, bool) or seconds < 0:
                return "wait needs seconds >= 0"
        else:
            return f"unknown primitive {primitive!r}"
        return None

    def _run(self):
        with self._clock.registered():
            while True:
                try:
                    _, doc = self._cmd.listen_info(block=True)
                except ChannelClosed:
                    break
                action_id = doc.get("id", "")
                problem = self._check(doc)
                if problem is not None:
                    self._res.send_info({
                        "id": action_id, "robot": self.cfg.name,
                        "status": "error", "detail": problem, "elapsed": 0.0,
                    })
                    continue
                primitive, args = doc["primitive"], doc["args"]
                start = self._clock.now()
                self.transcript.record(start, self.cfg.name, primitive, args, "start", action_id)
                self._clock.sleep(self._duration(primitive, args))
                end = self._clock.now()
                self.transcript.record(end, self.cfg.name, primitive, args, "end", action_id)
                self._res.send_info({
                    "id": action_id, "robot": self.cfg.name,
                    "status": "done", "detail": "", "elapsed": end - start,
                })
            if self._ctx is not None:
                self._ctx.shutdown(manual=True, detail="command channel closed")

    def join(self, timeout: float | None = None) -> None:
        self._thread.join(timeout)

    def stop(self) -> None:
        self._stopping = True
        self._cmd.close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        self._res.close()


@dataclass
class GestureScript:
    """Scheduled ground-truth gestures; replay order is the file order."""

    entries: list = field(default_factory=list)  # (at_seconds, label) pairs

    def __post_init__(self):
        last = None
        for at, label in self.entries:
            if label not in GESTURE_LABELS:
                raise ScriptOrder(f"unknown gesture label {label!r}")
            if last is not None and at <= last:
                raise ScriptOrder(f"timestamps must be strictly increasing, got {at} after {last}")
            last = at

    @classmethod
    def from_doc(cls, doc) -> "GestureScript":
        if not isinstance(doc, list):
            raise ScriptOrder("script must be a JSON array")
        return cls([(float(e["at"]), e["label"]) for e in doc])

    @classmethod
    def load(cls, path) -> "GestureScript":
        with open(path, encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))

    def to_doc(self) -> list:
        return [{"at": at, "label": label} for at, label in self.entries]


class Gate:
    """A one-shot start signal the harness opens under the clock lock."""

    def __init__(self, clock=WALL):
        self._clock = clock
        self._open = False

    def open(self) -> None:
        with self._clock.lock():
            self._open = True
            self._clock.kick()

    def is_open(self) -> bool:
        return self._open


class GestureReplayNode:
    """Sensory node: publishes {"label": L} on gesture_truth per the script."""

    def __init__(self, script: GestureScript, master_endpoint, sink_endpoint,
                 clock=WALL, name="gesture_replay", topic=TRUTH_TOPIC,
                 gate: Gate | None = None, settle: float = 0.0):
        self.script = script
        self.name = name
        self.topic = topic
        self._clock = clock
        self._master = master_endpoint
        self._sink = sink_endpoint
        self._gate = gate
        self._settle = settle
        self._pub = None
        self._thread = None

    def start(self) -> "GestureReplayNode":
        self._pub = Publisher(self.topic, self.name, "json", self._master, clock=self._clock)
        self._ctx = node_start(NodeDescriptor(self.name, "sensory"), self._sink, clock=self._clock)
        self._thread = threading.Thread(target=self._run, daemon=True, name=f"replay:{self.name}")
        self._thread.start()
        return self

    @property
    def publisher(self) -> Publisher:
        return self._pub

    def _run(self):
        with self._clock.registered():
            if self._gate is not None:
                self._clock.wait_for(self._gate.is_open)
            if self._settle > 0:
                self._clock.sleep(self._settle)
            t0 = self._clock.now()
            for at, label in self.script.entries:
                delay = (t0 + at) - self._clock.now()
                if delay > 0:
                    self._clock.sleep(delay)
                self._pub.send_info({"label": label})
            self._clock.sleep(REPLAY_EXIT_DELAY)
            self._ctx.shutdown(manual=True, detail="script finished")
            self._pub.close()

    def join(self, timeout: float | None = None) -> None:
        self._thread.join(timeout)

    def stop(self) -> None:
        # Teardown for runs halted mid-script: a replay parked in a
        # virtual-clock sleep never wakes, so release its endpoints here.
        self._pub.close()
        self._ctx.close()


@dataclass
class ConfusionModel:
    """Per-true-label emission probabilities; "none" is the miss bucket."""

    rows: dict

    def __post_init__(self):
        for true_label, row in self.rows.items():
            if true_label not in GESTURE_LABELS:
                raise ValueError(f"unknown true label {true_label!r}")
            for emitted in row:
                if emitted != "none" and emitted not in GESTURE_LABELS:
                    raise ValueError(f"unknown emitted label {emitted!r}")
            total = sum(row.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"row {true_label!r} sums to {total}, not 1")

    @classmethod
    def identity(cls) -> "ConfusionModel":
        return cls({label: {label: 1.0} for label in GESTURE_LABELS})

    @classmethod
    def typical(cls) -> "ConfusionModel":
        # Illustrative defaults: the two reliable gestures at full recall,
        # two good ones at 0.9, batting frequently confused or missed.
        return cls({
            "hand_up": {"hand_up": 1.0},
            "karate": {"karate": 1.0},
            "stretch_up": {"stretch_up": 0.9, "none": 0.1},
            "katana": {"katana": 0.9, "none": 0.1},
            "batting": {"batting": 0.6, "katana": 0.2, "none": 0.2},
        })

    @classmethod
    def named(cls, name: str) -> "ConfusionModel":
        if name == "identity":
            return cls.identity()
        if name == "typical":
            return cls.typical()
        raise ValueError(f"unknown confusion model {name!r}")

    @classmethod
    def load(cls, path) -> "ConfusionModel":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))


class GestureClassifier:
    """Emission sampler for one target gesture.

    Each truth message consumes exactly one RNG draw, so a seeded rerun
    reproduces the emission sequence draw for draw.
    """

    def __init__(self, target: str, model: ConfusionModel, seed: int = 0):
        if target not in GESTURE_LABELS:
            raise ValueError(f"unknown gesture label {target!r}")
        self.target = target
        self.model = model
        self._rng = random.Random(f"{seed}|{target}")

    def sample(self, true_label: str) -> str | None:
        row = self.model.rows.get(true_label)
        u = self._rng.random()
        if row is None:
            return None
        acc = 0.0
        for label in sorted(k for k in row if k != "none"):
            acc += row[label]
            if u < acc:
                return label
        return None

    def detects(self, true_label: str) -> bool:
        return self.sample(true_label) == self.target


class PerceptualNode:
    """Watches gesture_truth for one target label; raises triggers via the
    shared trigger channel when its classifier fires."""

    def __init__(self, target: str, model: ConfusionModel, master_endpoint, sink_endpoint,
                 trigger_endpoint, seed: int = 0, clock=WALL,
                 truth_topic=TRUTH_TOPIC, name: str | None = None):
        self.target = target
        self.name = name or f"gesture_{target}"
        self.classifier = GestureClassifier(target, model, seed)
        self._clock = clock
        self._master = master_endpoint
        self._sink = sink_endpoint
        self._trigger_endpoint = tuple(trigger_endpoint)
        self._truth_topic = truth_topic
        self._thread = None

    def start(self) -> "PerceptualNode":
        self._truth = Subscriber(self._truth_topic, self.name, self._master, clock=self._clock)
        self._trigger = SinkClient(self._trigger_endpoint, clock=self._clock)
        self._ctx = node_start(NodeDescriptor(self.name, "perception"), self._sink, clock=self._clock)
        self._thread = threading.Thread(target=self._run, daemon=True, name=f"perceive:{self.name}")
        self._thread.start()
        return self

    def ready(self) -> bool:
        return self._truth.connected

    def _run(self):
        with self._clock.registered():
            while True:
                try:
                    _, doc = self._truth.listen_info(block=True)
                except ChannelClosed:
                    break
                label = doc.get("label")
                if isinstance(label, str) and self.classifier.detects(label):
                    self._ctx.publish_state("executing", f"detected {self.target}")
                    try:
                        self._trigger.send({"gesture": self.target})
                    except OSError:
                        break
            self._ctx.shutdown(manual=True, detail="truth channel closed")
            self._trigger.close()

    def join(self, timeout: float | None = None) -> None:
        self._thread.join(timeout)

    def stop(self) -> None:
        self._truth.close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
