"""Robot behavior layer: social primitives, rules, and program plans.

A ``RobotFacade`` fronts one or more robots: ``execute`` publishes a
behavior spec on the target's command topic and blocks until the
matching-id result comes back (result-gated sequencing), while
``execute_batch``/``execute_parallel`` dispatch everything first and
await afterwards, so total time is the max of the individual durations.

``BehaviorEngine`` is a single-threaded reactive loop: if a trigger
message's key equals a rule's value, the rule's actions fire through the
facade.  ``interpret_program`` turns a declarative ProgramDoc (the block
console's output) into a deterministic run plan.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

from . import wire
from .clock import WALL
from .node import LaunchSpec, NODE_KINDS
from .pubsub import ChannelClosed, Publisher, Subscriber
from .sim import cmd_topic, res_topic

logger = logging.getLogger("nodeprim.behavior")

PRIMITIVES = ("say", "posture", "animation", "wait")
DEFAULT_WATCHDOG = 30.0
DEFAULT_POLL_MS = 100
PROBE_TIMEOUT = 2.0


class EngineRunning(Exception):
    pass


class ActionTimeout(Exception):
    def __init__(self, robot, action_id):
        super().__init__(f"no result from {robot!r} for action {action_id!r}")
        self.robot = robot
        self.action_id = action_id


class ParallelTimeout(Exception):
    """Some robots in a batch never replied; partial results are attached."""

    def __init__(self, missing, results):
        super().__init__(f"no result from: {', '.join(missing)}")
        self.missing = missing
        self.results = results


class SchemaViolation(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path


class UnknownRobot(SchemaViolation):
    pass


def validate_args(primitive: str, args: dict) -> None:
    """Check the primitive/args pairing; raises ValueError on mismatch."""
    if primitive not in PRIMITIVES:
        raise ValueError(f"unknown primitive {primitive!r}")
    if not isinstance(args, dict):
        raise ValueError("args must be a document")
    if primitive == "say":
        if not isinstance(args.get("text"), str):
            raise ValueError("say needs a text argument")
    elif primitive in ("posture", "animation"):
        if not isinstance(args.get("name"), str):
            raise ValueError(f"{primitive} needs a name argument")
    else:
        seconds = args.get("seconds")
        if not isinstance(seconds, (int, float)) or isinstance(seconds, bool) or seconds < 0:
            raise ValueError("wait needs seconds >= 0")


@dataclass(frozen=True)
class BehaviorSpec:
    id: str
    robot: str
    primitive: str
    args: dict

    def __post_init__(self):
        validate_args(self.primitive, self.args)

    def to_doc(self) -> dict:
        return {"id": self.id, "robot": self.robot, "primitive": self.primitive, "args": self.args}


@dataclass(frozen=True)
class ActionResult:
    id: str
    robot: str
    status: str
    detail: str
    elapsed: float

    @classmethod
    def from_doc(cls, doc: dict) -> "ActionResult":
        status = doc.get("status")
        if status not in ("done", "error"):
            raise ValueError(f"result status must be done or error, got {status!r}")
        return cls(
            id=str(doc.get("id", "")),
            robot=str(doc.get("robot", "")),
            status=status,
            detail=str(doc.get("detail", "")),
            elapsed=float(doc.get("elapsed", 0.0)),
        )


@dataclass(frozen=True)
class TriggerCondition:
    topic: str
    key: str
    equals: object


@dataclass(frozen=True)
class ActionTemplate:
    primitive: str
    args: dict
    robots: tuple


@dataclass(frozen=True)
class ReactiveRule:
    trigger: TriggerCondition
    actions: tuple  # ActionTemplate, fired in order
    mode: str = "sequence"


@dataclass(frozen=True)
class RobotDecl:
    name: str
    ip: str = "127.0.0.1"
    simulated: bool = True


@dataclass(frozen=True)
class ProgramDoc:
    robots: tuple
    launch: tuple
    rules: tuple


class RobotFacade:
    """Command/result endpoints for a set of robots, used by one thread.

    Holds a publisher on every target's cmd topic and a subscriber on its
    res topic.  Results are correlated by action id; results for ids we
    are not waiting on are dropped and counted in ``orphans``.
    """

    def __init__(self, name, targets, master_endpoint, clock=WALL, ctx=None,
                 watchdog=DEFAULT_WATCHDOG):
        self.name = name
        self.targets = list(targets)
        self.watchdog = watchdog
        self.orphans = 0
        self._clock = clock
        self._ctx = ctx
        self._master = master_endpoint
        self._next = 0
        self._pubs: dict[str, Publisher] = {}
        self._subs: dict[str, Subscriber] = {}

    def connect(self, probe_timeout: float = PROBE_TIMEOUT) -> dict[str, bool]:
        """Open channels to every target and probe them (real time).

        A target is up when its command subscriber has connected to us and
        its result publisher accepted our subscription.  Per-robot
        robot_connected / robot_connection_failed events are emitted;
        failure is reported, never raised.
        """
        for target in self.targets:
            self._pubs[target] = Publisher(
                cmd_topic(target), self.name, "json", self._master, clock=self._clock
            )
            self._subs[target] = Subscriber(
                res_topic(target), self.name, self._master, clock=self._clock
            )
        up: dict[str, bool] = {}
        end = time.monotonic() + probe_timeout
        for target in self.targets:
            while True:
                ok = self._pubs[target].channel_count > 0 and self._subs[target].connected
                if ok or time.monotonic() >= end:
                    break
                time.sleep(0.02)
            up[target] = ok
            if self._ctx is not None:
                self._ctx.publish_state(
                    "robot_connected" if ok else "robot_connection_failed",
                    f"robot {target}" if ok else f"robot {target} did not answer the probe",
                )
        return up

    def next_id(self) -> str:
        self._next += 1
        return f"{self.name}-{self._next}"

    def execute(self, spec: BehaviorSpec) -> ActionResult:
        """Dispatch one spec and block until its result (or the watchdog)."""
        if spec.robot not in self.targets:
            raise ValueError(f"robot {spec.robot!r} is not a facade target")
        self._pubs[spec.robot].send_info(spec.to_doc())
        return self._await(spec.robot, spec.id, self._clock.now() + self.watchdog)

    def execute_batch(self, specs) -> list[ActionResult]:
        """Dispatch every spec before awaiting any result.

        All results share one watchdog deadline, so elapsed time is the
        max of the individual durations, not their sum.
        """
        for spec in specs:
            if spec.robot not in self.targets:
                raise ValueError(f"robot {spec.robot!r} is not a facade target")
        for spec in specs:
            self._pubs[spec.robot].send_info(spec.to_doc())
        deadline = self._clock.now() + self.watchdog
        results, missing = [], []
        for spec in specs:
            try:
                results.append(self._await(spec.robot, spec.id, deadline))
            except ActionTimeout:
                if spec.robot not in missing:
                    missing.append(spec.robot)
        if missing:
            raise ParallelTimeout(missing, results)
        return results

    def execute_parallel(self, primitive, args, robots) -> list[ActionResult]:
        """One template fanned out to several robots, dispatched in parallel."""
        specs = [BehaviorSpec(self.next_id(), robot, primitive, args) for robot in robots]
        return self.execute_batch(specs)

    def _await(self, robot, action_id, deadline) -> ActionResult:
        sub = self._subs[robot]
        while True:
            remaining = deadline - self._clock.now()
            if remaining <= 0:
                raise ActionTimeout(robot, action_id)
            ok, doc = sub.listen_info(block=False, timeout_ms=remaining * 1000.0)
            if not ok:
                raise ActionTimeout(robot, action_id)
            if not isinstance(doc, dict):
                continue
            if doc.get("id") != action_id:
                self.orphans += 1
                continue
            return ActionResult.from_doc(doc)

    def close(self) -> None:
        for pub in self._pubs.values():
            pub.close()
        for sub in self._subs.values():
            sub.close()


class BehaviorEngine:
    """Single-threaded reactive loop over if-then rules.

    Trigger topics are subscribed lazily when the loop starts; each
    distinct topic gets a 100 ms non-blocking listen per cycle, round
    robin.  Rules fire in insertion order; action timeouts are logged
    and the loop continues.
    """

    def __init__(self, facade: RobotFacade, master_endpoint, clock=WALL, ctx=None,
                 poll_ms=DEFAULT_POLL_MS, node_name=None):
        self.facade = facade
        self.rules: list[ReactiveRule] = []
        self._master = master_endpoint
        self._clock = clock
        self._ctx = ctx
        self._poll_ms = poll_ms
        self._node_name = node_name or f"{facade.name}"
        self._running = False
        self._stop = False
        self._subs: dict[str, Subscriber] = {}
        self._thread: threading.Thread | None = None

    def add_rule(self, rule: ReactiveRule) -> None:
        if self._running:
            raise EngineRunning("cannot add rules to a running engine")
        self.rules.append(rule)

    def trigger_topics(self) -> list[str]:
        topics = []
        for rule in self.rules:
            if rule.trigger.topic not in topics:
                topics.append(rule.trigger.topic)
        return topics

    def run(self) -> None:
        """Loop until stopped.  Call from the thread the engine owns."""
        if not self.rules:
            raise ValueError("engine has no rules")
        self._running = True
        try:
            with self._clock.registered():
                for topic in self.trigger_topics():
                    self._subs[topic] = Subscriber(
                        topic, self._node_name, self._master, clock=self._clock
                    )
                live = dict(self._subs)
                while not self._stop and live:
                    for topic, sub in list(live.items()):
                        if self._stop:
                            break
                        try:
                            ok, doc = sub.listen_info(block=False, timeout_ms=self._poll_ms)
                        except ChannelClosed:
                            del live[topic]
                            continue
                        if ok and isinstance(doc, dict):
                            self._dispatch(topic, doc)
        finally:
            self._running = False
            if self._ctx is not None:
                self._ctx.shutdown(manual=True, detail="engine stopped")

    def _dispatch(self, topic: str, doc: dict) -> None:
        for rule in self.rules:
            cond = rule.trigger
            if cond.topic == topic and doc.get(cond.key) == cond.equals:
                self._fire(rule, doc)

    def _fire(self, rule: ReactiveRule, doc: dict) -> None:
        if self._ctx is not None:
            self._ctx.publish_state(
                "executing", f"rule {rule.trigger.key}={rule.trigger.equals!r} fired"
            )
        try:
            if rule.mode == "parallel":
                specs = [
                    BehaviorSpec(self.facade.next_id(), robot, action.primitive, action.args)
                    for action in rule.actions
                    for robot in action.robots
                ]
                self.facade.execute_batch(specs)
            else:
                for action in rule.actions:
                    if len(action.robots) == 1:
                        self.facade.execute(BehaviorSpec(
                            self.facade.next_id(), action.robots[0], action.primitive, action.args
                        ))
                    else:
                        self.facade.execute_parallel(action.primitive, action.args, action.robots)
        except (ActionTimeout, ParallelTimeout) as exc:
            logger.warning("rule action timed out: %s", exc)

    def start(self) -> "BehaviorEngine":
        def guarded():
            try:
                self.run()
            except Exception:
                logger.exception("engine %s died", self._node_name)

        self._thread = threading.Thread(target=guarded, daemon=True, name=f"engine:{self._node_name}")
        self._thread.start()
        return self

    def stop(self, timeout: float = 5.0) -> None:
        with self._clock.lock():
            self._stop = True
            self._clock.kick()
        for sub in self._subs.values():
            sub.close()
        if self._thread is not None:
            self._thread.join(timeout)

    @property
    def running(self) -> bool:
        return self._running


# --- ProgramDoc parsing -------------------------------------------------

def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise SchemaViolation(f"{path}/{key}", f"missing required field {key!r}")
    return doc[key]


def _require_list(doc: dict, key: str, path: str) -> list:
    value = _require(doc, key, path)
    if not isinstance(value, list):
        raise SchemaViolation(f"{path}/{key}", "expected an array")
    return value


def _require_str(doc: dict, key: str, path: str) -> str:
    value = _require(doc, key, path)
    if not isinstance(value, str) or not value:
        raise SchemaViolation(f"{path}/{key}", "expected non-empty text")
    return value


def parse_program(doc) -> ProgramDoc:
    """Validate raw ProgramDoc JSON; raises SchemaViolation / UnknownRobot
    with a JSON-pointer path to the offending element."""
    if not isinstance(doc, dict):
        raise SchemaViolation("", "program must be a JSON object")

    robots = []
    names = set()
    for i, entry in enumerate(_require_list(doc, "robots", "")):
        path = f"/robots/{i}"
        if not isinstance(entry, dict):
            raise SchemaViolation(path, "expected an object")
        name = _require_str(entry, "name", path)
        if name in names:
            raise SchemaViolation(f"{path}/name", f"duplicate robot name {name!r}")
        names.add(name)
        ip = entry.get("ip", "127.0.0.1")
        simulated = entry.get("simulated", True)
        if not isinstance(ip, str):
            raise SchemaViolation(f"{path}/ip", "expected text")
        if not isinstance(simulated, bool):
            raise SchemaViolation(f"{path}/simulated", "expected a boolean")
        robots.append(RobotDecl(name=name, ip=ip, simulated=simulated))

    launch = []
    launch_names = set(names)
    for i, entry in enumerate(_require_list(doc, "launch", "")):
        path = f"/launch/{i}"
        if not isinstance(entry, dict):
            raise SchemaViolation(path, "expected an object")
        kind = _require_str(entry, "type", path)
        if kind not in NODE_KINDS:
            raise SchemaViolation(f"{path}/type", f"unknown node type {kind!r}")
        name = _require_str(entry, "name", path)
        if name in launch_names:
            raise SchemaViolation(f"{path}/name", f"duplicate node name {name!r}")
        launch_names.add(name)
        args = entry.get("args", {})
        if not isinstance(args, dict):
            raise SchemaViolation(f"{path}/args", "expected an object")
        launch.append(LaunchSpec(kind=kind, name=name, args=args))

    rules = []
    for i, entry in enumerate(_require_list(doc, "rules", "")):
        path = f"/rules/{i}"
        if not isinstance(entry, dict):
            raise SchemaViolation(path, "expected an object")
        when = _require(entry, "when", path)
        if not isinstance(when, dict):
            raise SchemaViolation(f"{path}/when", "expected an object")
        topic = _require_str(when, "topic", f"{path}/when")
        try:
            wire.validate_topic(topic)
        except wire.InvalidTopic as exc:
            raise SchemaViolation(f"{path}/when/topic", str(exc)) from exc
        key = _require_str(when, "key", f"{path}/when")
        if "equals" not in when:
            raise SchemaViolation(f"{path}/when/equals", "missing required field 'equals'")
        mode = entry.get("mode", "sequence")
        if mode not in ("sequence", "parallel"):
            raise SchemaViolation(f"{path}/mode", f"mode must be sequence or parallel, got {mode!r}")
        actions = []
        do = _require_list(entry, "do", path)
        if not do:
            raise SchemaViolation(f"{path}/do", "a rule needs at least one action")
        for j, action in enumerate(do):
            apath = f"{path}/do/{j}"
            if not isinstance(action, dict):
                raise SchemaViolation(apath, "expected an object")
            primitive = _require_str(action, "primitive", apath)
            args = action.get("args", {})
            try:
                validate_args(primitive, args)
            except ValueError as exc:
                raise SchemaViolation(f"{apath}/args", str(exc)) from exc
            targets = _require_list(action, "robots", apath)
            if not targets:
                raise SchemaViolation(f"{apath}/robots", "an action needs at least one robot")
            for robot in targets:
                if robot not in names:
                    raise UnknownRobot(apath, f"undeclared robot {robot!r}")
            actions.append(ActionTemplate(primitive=primitive, args=args, robots=tuple(targets)))
        rules.append(ReactiveRule(
            trigger=TriggerCondition(topic=topic, key=key, equals=when["equals"]),
            actions=tuple(actions),
            mode=mode,
        ))

    return ProgramDoc(robots=tuple(robots), launch=tuple(launch), rules=tuple(rules))


@dataclass
class RunPlan:
    """Everything a run executor needs, in deterministic order."""

    program: ProgramDoc
    launches: list = field(default_factory=list)      # LaunchSpec, listed order then robot action nodes
    trigger_topics: list = field(default_factory=list)


def interpret_program(doc) -> RunPlan:
    """Turn raw ProgramDoc JSON into a run plan: the listed launches, one
    action node per declared robot, and the engine's trigger topics."""
    program = parse_program(doc)
    launches = list(program.launch)
    for robot in program.robots:
        launches.append(LaunchSpec(
            kind="action",
            name=robot.name,
            args={"robot": robot.name, "ip": robot.ip, "simulated": robot.simulated},
        ))
    topics = []
    for rule in program.rules:
        if rule.trigger.topic not in topics:
            topics.append(rule.trigger.topic)
    return RunPlan(program=program, launches=launches, trigger_topics=topics)
