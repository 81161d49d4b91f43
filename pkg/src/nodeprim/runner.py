"""In-process execution of a run plan: every node a thread, one clock.

``Stack`` is the shared infrastructure (master, event sink, trigger
channels).  ``ProgramRun`` builds the simulated nodes a plan calls for,
settles all connections on real time while the scenario clock holds
still, then releases the sensory replay through a start gate.  Under a
``VirtualClock`` the whole scenario is deterministic; under the wall
clock the same harness drives live demos.
"""

from __future__ import annotations

import itertools
import os
import time

from .behavior import BehaviorEngine, RobotFacade, RunPlan
from .channels import SharedTopicChannel
from .clock import WALL, VirtualClock
from .master import Master
from .node import EventSink, NodeDescriptor, node_start
from .sim import (
    ConfusionModel,
    Gate,
    GestureReplayNode,
    GestureScript,
    PerceptualNode,
    SimRobotConfig,
    SimRobotNode,
    Transcript,
)

_pool_counter = itertools.count()


def karate_program() -> dict:
    """The gesture-reaction demo program: one simulated robot, one scripted
    sensory replay, the five parallel perceptual nodes, and a rule that
    makes the robot react to a karate gesture.  ``fixtures/karate_program.json``
    is the canonical serialization of this document."""
    from .sim import GESTURE_LABELS

    return {
        "robots": [{"name": "nao", "ip": "127.0.0.1", "simulated": True}],
        "launch": [
            {"type": "sensory", "name": "gesture_replay", "args": {}},
            *[
                {"type": "perception", "name": f"gesture_{label}", "args": {"target": label}}
                for label in GESTURE_LABELS
            ],
        ],
        "rules": [
            {
                "when": {"topic": "gesture", "key": "gesture", "equals": "karate"},
                "mode": "sequence",
                "do": [
                    {"primitive": "say", "args": {"text": "Impressive!"}, "robots": ["nao"]},
                    {"primitive": "animation", "args": {"name": "cat"}, "robots": ["nao"]},
                ],
            }
        ],
    }


def fresh_port_pool(size: int = 48) -> range:
    """A port range unlikely to collide across stacks and processes.

    Stays below the kernel's ephemeral floor (commonly >= 16000 in this
    class of environment) so OS-assigned client ports cannot squat pool
    entries; the master additionally probe-binds before assigning.
    """
    base = 9000 + (os.getpid() * 13) % 1500 + (next(_pool_counter) * size) % 4500
    return range(base, base + size)


class Stack:
    """Master + event sink + shared trigger channels, all in-process."""

    def __init__(self, clock=WALL, port_pool=None):
        self.clock = clock
        self.master = Master(bind=("127.0.0.1", 0), port_pool=port_pool or fresh_port_pool()).start()
        self.sink = EventSink(bind=("127.0.0.1", 0), master_endpoint=self.master.endpoint, clock=clock)
        self._channels: dict[str, SharedTopicChannel] = {}

    @property
    def master_endpoint(self):
        return self.master.endpoint

    @property
    def sink_endpoint(self):
        return self.sink.endpoint

    @property
    def log(self):
        return self.sink.log

    def trigger_channel(self, topic: str) -> SharedTopicChannel:
        if topic not in self._channels:
            self._channels[topic] = SharedTopicChannel(
                topic, self.master.endpoint, clock=self.clock
            )
        return self._channels[topic]

    def stop(self) -> None:
        for channel in self._channels.values():
            channel.stop()
        self.sink.stop()
        self.master.stop()


class SettleTimeout(RuntimeError):
    pass


def drive(clock, fn, timeout: float = 30.0):
    """Run ``fn`` in a clock-registered worker thread and drive a virtual
    scheduler until it finishes; on a wall clock this is a plain call.
    Returns fn's result, re-raising whatever it raised."""
    if not isinstance(clock, VirtualClock):
        return fn()
    import threading

    outcome: dict = {}

    def work():
        with clock.registered():
            try:
                value = fn()
                with clock.lock():
                    outcome["value"] = value
                    clock.kick()
            except BaseException as exc:  # re-raised in the caller
                with clock.lock():
                    outcome["error"] = exc
                    clock.kick()

    worker = threading.Thread(target=work, daemon=True, name="drive")
    worker.start()
    clock.run(until=lambda: bool(outcome), settle_timeout=timeout)
    worker.join(timeout=5.0)
    if "error" in outcome:
        raise outcome["error"]
    return outcome["value"]


class ProgramRun:
    """Runs a RunPlan with in-process node threads.

    ``scripts`` maps sensory node names to GestureScript objects; launch
    args may instead carry a ``script`` file path.  The perceptual nodes'
    confusion model and seed come from launch args unless overridden.
    """

    def __init__(self, plan: RunPlan, stack: Stack, scripts=None, confusion=None,
                 seed: int | None = None, engine_name: str = "engine", watchdog: float = 30.0):
        self.plan = plan
        self.stack = stack
        self.clock = stack.clock
        self.gate = Gate(self.clock)
        self.transcripts: dict[str, Transcript] = {}
        self._scripts = scripts or {}
        self._confusion = confusion
        self._seed = seed
        self._engine_name = engine_name
        self._watchdog = watchdog
        self.replays: list[GestureReplayNode] = []
        self.perceptuals: list[PerceptualNode] = []
        self.robots: list[SimRobotNode] = []
        self.engine: BehaviorEngine | None = None
        self.facade: RobotFacade | None = None
        self._ctx = None

    def _build_replay(self, spec) -> GestureReplayNode:
        if spec.name in self._scripts:
            script = self._scripts[spec.name]
        elif "script" in spec.args:
            script = GestureScript.load(spec.args["script"])
        else:
            script = GestureScript([])
        return GestureReplayNode(
            script, self.stack.master_endpoint, self.stack.sink_endpoint,
            clock=self.clock, name=spec.name, gate=self.gate,
            settle=float(spec.args.get("settle", 0.0)),
        )

    def _build_perceptual(self, spec, trigger_endpoint) -> PerceptualNode:
        if self._confusion is not None:
            model = self._confusion
        else:
            ref = str(spec.args.get("confusion", "identity"))
            model = ConfusionModel.named(ref) if ref in ("identity", "typical") else ConfusionModel.load(ref)
        seed = self._seed if self._seed is not None else int(spec.args.get("seed", 0))
        return PerceptualNode(
            spec.args["target"], model, self.stack.master_endpoint, self.stack.sink_endpoint,
            trigger_endpoint, seed=seed, clock=self.clock, name=spec.name,
        )

    def _build_robot(self, spec) -> SimRobotNode:
        cfg = SimRobotConfig(
            name=spec.args.get("robot", spec.name),
            speech_rate=float(spec.args.get("speech_rate", 0.06)),
            posture_duration=float(spec.args.get("posture_duration", 1.0)),
            animation_duration=float(spec.args.get("animation_duration", 2.0)),
        )
        transcript = Transcript(self.clock)
        self.transcripts[cfg.name] = transcript
        return SimRobotNode(
            cfg, self.stack.master_endpoint, self.stack.sink_endpoint,
            clock=self.clock, transcript=transcript,
        )

    def start(self) -> "ProgramRun":
        # Bind order matters: trigger channels and the truth publisher go
        # up before their subscribers so nothing burns connect retries.
        trigger_endpoints = {
            topic: self.stack.trigger_channel(topic).endpoint
            for topic in self.plan.trigger_topics
        }
        for spec in self.plan.launches:
            if spec.kind == "sensory":
                self.replays.append(self._build_replay(spec).start())
        for spec in self.plan.launches:
            if spec.kind == "perception":
                topic = spec.args.get("trigger_topic", "gesture")
                endpoint = trigger_endpoints.get(topic) or self.stack.trigger_channel(topic).endpoint
                self.perceptuals.append(self._build_perceptual(spec, endpoint).start())
            elif spec.kind == "action":
                self.robots.append(self._build_robot(spec).start())

        targets = [robot.name for robot in self.plan.program.robots]
        if self.plan.program.rules and targets:
            self._ctx = node_start(
                NodeDescriptor(self._engine_name, "cognitive"),
                self.stack.sink_endpoint, clock=self.clock,
            )
            self.facade = RobotFacade(
                self._engine_name, targets, self.stack.master_endpoint,
                clock=self.clock, ctx=self._ctx, watchdog=self._watchdog,
            )
            self.facade.connect()
            self.engine = BehaviorEngine(
                self.facade, self.stack.master_endpoint, clock=self.clock,
                ctx=self._ctx, node_name=self._engine_name,
            )
            for rule in self.plan.program.rules:
                self.engine.add_rule(rule)
            self.engine.start()
        return self

    def settle(self, timeout: float = 10.0) -> None:
        """Real-time wait until every channel in the topology is connected."""
        checks = []
        for replay in self.replays:
            expected = len(self.perceptuals)
            checks.append((f"truth subscribers of {replay.name}",
                           lambda r=replay, n=expected: r.publisher.channel_count >= n))
        for perceptual in self.perceptuals:
            checks.append((f"truth feed of {perceptual.name}", perceptual.ready))
        for robot in self.robots:
            checks.append((f"command feed of {robot.cfg.name}", robot.ready))
        if self.engine is not None:
            for topic in self.plan.trigger_topics:
                channel = self.stack.trigger_channel(topic)
                checks.append((f"trigger listeners on {topic}",
                               lambda c=channel: c.publisher.channel_count >= 1))
        end = time.monotonic() + timeout
        for label, check in checks:
            while not check():
                if time.monotonic() >= end:
                    raise SettleTimeout(f"timed out waiting for {label}")
                time.sleep(0.02)

    def release(self) -> None:
        self.gate.open()

    def run_until(self, predicate, horizon=None, timeout: float = 30.0) -> float:
        """Release the replay gate and drive until the predicate holds.

        Virtual clocks advance deterministically through the scheduler;
        the wall clock just polls.  Returns the clock time reached.
        """
        self.release()
        if isinstance(self.clock, VirtualClock):
            return self.clock.run(until=predicate, horizon=horizon, settle_timeout=timeout)
        end = time.monotonic() + timeout
        while True:
            with self.clock.lock():
                if predicate():
                    return self.clock.now()
            if time.monotonic() >= end:
                raise TimeoutError("scenario did not reach its stop condition")
            time.sleep(0.02)

    def transcript(self, robot: str) -> Transcript:
        return self.transcripts[robot]

    def stop(self) -> None:
        if self.engine is not None:
            self.engine.stop()
        if self.facade is not None:
            self.facade.close()
        for robot in self.robots:
            robot.stop()
        for perceptual in self.perceptuals:
            perceptual.stop()
        for replay in self.replays:
            replay.stop()
