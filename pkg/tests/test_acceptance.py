"""Acceptance suite: one test per criterion, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the verdict
lines as they happen; without ``-s`` they appear in captured output.
"""

import functools
import io
import json
import random
import stat
import string
import time
from pathlib import Path

import httpx
import pytest

from nodeprim import wire
from nodeprim.behavior import RobotFacade, interpret_program
from nodeprim.clock import VirtualClock
from nodeprim.gateway import GatewayServer
from nodeprim.master import Master
from nodeprim.node import LaunchSpec, Launcher, NodeDescriptor, node_start
from nodeprim.pubsub import Publisher, Subscriber
from nodeprim.runner import ProgramRun, Stack, drive, fresh_port_pool, karate_program
from nodeprim.sim import (
    GESTURE_LABELS,
    ConfusionModel,
    GestureReplayNode,
    GestureScript,
    PerceptualNode,
    SimRobotConfig,
    SimRobotNode,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
CHILD = Path(__file__).with_name("child_node.py")


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {name}: FAIL")
                raise
            print(f"ACCEPTANCE {name}: PASS")
        return wrapper
    return deco


@criterion("discovery handshake")
def test_discovery_handshake():
    t_start = time.monotonic()
    master = Master(bind=("127.0.0.1", 0), port_pool=fresh_port_pool()).start()
    try:
        pub = Publisher("human_behaviour", "emotion_node", "json", master.endpoint)
        sub = Subscriber("human_behaviour", "cognitive_node", master.endpoint)
        dump = {r["topic"]: r for r in __import__("nodeprim.master", fromlist=["MasterClient"])
                .MasterClient(master.endpoint).dump()}
        record = dump["human_behaviour"]
        assert pub.endpoint == (record["ip"], record["port"])
        assert sub.endpoint == (record["ip"], record["port"])
        assert record["matched"] is True
        assert pub.wait_for_channels(1)
        t0 = time.monotonic()
        pub.send_info({"human_state": "happy"})
        ok, payload = sub.listen_info(block=True)
        roundtrip = time.monotonic() - t0
        assert ok and payload == {"human_state": "happy"}
        assert roundtrip < 0.5, f"round-trip took {roundtrip:.3f}s"
        pub.close()
        sub.close()
    finally:
        master.stop()
    assert time.monotonic() - t_start < 5.0


@criterion("codec properties")
def test_codec_properties():
    t_start = time.monotonic()
    rng = random.Random(4242)
    charset = "".join(chr(c) for c in range(0x21, 0x7F))
    for _ in range(1000):
        topic = "".join(rng.choice(charset) for _ in range(rng.randint(1, 64)))
        payload = rng.randbytes(rng.randint(0, 4096))
        assert wire.decode_frame(io.BytesIO(wire.encode_frame(topic, payload))) == (topic, payload)

    def random_doc(depth):
        doc = {}
        for _ in range(rng.randint(0, 5)):
            key = "".join(rng.choice(string.ascii_letters) for _ in range(rng.randint(1, 8)))
            choice = rng.randint(0, 4 if depth < 3 else 3)
            if choice == 0:
                doc[key] = "".join(rng.choice(string.printable) for _ in range(rng.randint(0, 12)))
            elif choice == 1:
                doc[key] = rng.randint(-(2**40), 2**40)
            elif choice == 2:
                doc[key] = rng.uniform(-1e9, 1e9)
            elif choice == 3:
                doc[key] = rng.choice([True, False, None])
            else:
                doc[key] = random_doc(depth + 1)
        return doc

    for _ in range(500):
        doc = random_doc(1)
        encoded = wire.encode_payload(wire.Message("t", doc))
        assert wire.decode_payload(encoded, "json") == doc
    assert time.monotonic() - t_start < 10.0


@criterion("non-blocking contract")
def test_nonblocking_contract(stack):
    pub = Publisher("quiet", "p", "json", stack.master_endpoint)
    sub = Subscriber("quiet", "s", stack.master_endpoint)
    assert pub.wait_for_channels(1)
    try:
        for rep in range(20):
            t0 = time.monotonic()
            ok, payload = sub.listen_info(block=False, timeout_ms=100)
            elapsed = time.monotonic() - t0
            assert (ok, payload) == (False, None), f"rep {rep}: unexpected message"
            assert 0.100 <= elapsed < 0.200, f"rep {rep}: waited {elapsed * 1000:.1f}ms"
    finally:
        pub.close()
        sub.close()


@criterion("FIFO/isolation fuzz")
def test_fifo_isolation_fuzz(stack):
    topics = ["alpha", "beta", "gamma"]
    pubs = {t: Publisher(t, f"pub_{t}", "json", stack.master_endpoint) for t in topics}
    subs = {t: Subscriber(t, f"sub_{t}", stack.master_endpoint) for t in topics}
    try:
        for t in topics:
            assert pubs[t].wait_for_channels(1)
        rng = random.Random(7)
        counters = {t: 0 for t in topics}
        order = [t for t in topics for _ in range(200)]
        rng.shuffle(order)
        for t in order:
            counters[t] += 1
            pubs[t].send_info({"topic": t, "seq": counters[t]})
        for t in topics:
            last = 0
            for _ in range(200):
                ok, doc = subs[t].listen_info(block=True)
                assert ok
                assert doc["topic"] == t, f"foreign message on {t}: {doc}"
                assert doc["seq"] == last + 1, f"{t}: got {doc['seq']} after {last}"
                last = doc["seq"]
            assert last == 200
    finally:
        for t in topics:
            pubs[t].close()
            subs[t].close()


@criterion("gesture scenario (virtual clock)")
def test_gesture_scenario_matches_golden_fixture():
    t_start = time.monotonic()
    golden = json.loads((FIXTURES / "golden_transcript.json").read_text())

    # Independent timing oracle: the trigger fires at the script time; each
    # action starts when the previous result lands; durations are
    # chars*rate for say and the configured animation time.
    say_start = 3.0
    say_end = say_start + len("Impressive!") * 0.06
    anim_end = say_end + 2.0
    oracle = [
        ("say", "start", say_start), ("say", "end", say_end),
        ("animation", "start", say_end), ("animation", "end", anim_end),
    ]
    assert [(e["primitive"], e["mark"], e["stamp"]) for e in golden] == oracle

    runs = []
    for _ in range(5):
        clock = VirtualClock()
        stack = Stack(clock=clock)
        plan = interpret_program(karate_program())
        run = ProgramRun(plan, stack, scripts={
            "gesture_replay": GestureScript([(1.0, "hand_up"), (3.0, "karate")]),
        }, seed=42)
        try:
            run.start()
            run.settle()
            transcript = run.transcripts["nao"]
            run.run_until(lambda: transcript.completed() >= 2, horizon=60.0)
            runs.append(transcript.entries())
        finally:
            run.stop()
            stack.stop()
    for entries in runs:
        assert entries == golden, "transcript diverged from the golden fixture"
    assert all(entries == runs[0] for entries in runs), "reruns not deterministic"
    assert time.monotonic() - t_start < 10.0


@criterion("five-node parallelism")
def test_five_node_parallelism():
    for label in GESTURE_LABELS:
        clock = VirtualClock()
        stack = Stack(clock=clock)
        try:
            channel = stack.trigger_channel("gesture")
            replay = GestureReplayNode(GestureScript([(1.0, label)]),
                                       stack.master_endpoint, stack.sink_endpoint,
                                       clock=clock).start()
            nodes = [
                PerceptualNode(target, ConfusionModel.identity(), stack.master_endpoint,
                               stack.sink_endpoint, channel.endpoint, clock=clock)
                for target in GESTURE_LABELS
            ]
            for node in nodes:
                node.start()
            listener = Subscriber("gesture", "listener", stack.master_endpoint, clock=clock)
            assert replay.publisher.wait_for_channels(len(nodes))
            assert channel.publisher.wait_for_channels(1)

            def drain():
                triggers = []
                ok, doc = listener.listen_info(block=True)
                triggers.append(doc)
                while True:
                    ok, doc = listener.listen_info(block=False, timeout_ms=100)
                    if not ok:
                        return triggers
                    triggers.append(doc)

            triggers = drive(clock, drain)
            assert triggers == [{"gesture": label}], f"{label}: {triggers}"
            listener.close()
            for node in nodes:
                node.stop()
            replay.stop()
        finally:
            stack.stop()


@criterion("parallel dispatch bound")
def test_parallel_dispatch_bound():
    clock = VirtualClock()
    stack = Stack(clock=clock)
    try:
        robots = [
            SimRobotNode(SimRobotConfig(name, speech_rate=0.1), stack.master_endpoint,
                         stack.sink_endpoint, clock=clock).start()
            for name in ("nao1", "nao2")
        ]
        ctx = node_start(NodeDescriptor("cog", "cognitive"), stack.sink_endpoint, clock=clock)
        facade = RobotFacade("cog", ["nao1", "nao2"], stack.master_endpoint, clock=clock, ctx=ctx)
        facade.connect()

        def parallel_say():
            t0 = clock.now()
            results = facade.execute_parallel("say", {"text": "x" * 10}, ["nao1", "nao2"])
            return clock.now() - t0, results

        elapsed, results = drive(clock, parallel_say)
        assert [r.status for r in results] == ["done", "done"]
        assert elapsed == 1.0, f"virtual elapsed {elapsed!r}, tolerance is zero"
        facade.close()
        for robot in robots:
            robot.stop()
        ctx.close()
    finally:
        stack.stop()


@criterion("lifecycle events")
def test_lifecycle_events(tmp_path):
    CHILD.chmod(CHILD.stat().st_mode | stat.S_IEXEC)
    master = Master(bind=("127.0.0.1", 0), port_pool=fresh_port_pool()).start()
    gateway = GatewayServer(bind=("127.0.0.1", 0), data_dir=tmp_path / "runs",
                            master_endpoint=master.endpoint, sink_bind=("127.0.0.1", 0)).start()
    try:
        launcher = Launcher(master.endpoint, gateway.sink_endpoint, gateway.log)
        handles = {
            "kill_me": launcher.launch(LaunchSpec("sensory", "kill_me", {"mode": "sleep"},
                                                  executable=str(CHILD))),
            "crash_me": launcher.launch(LaunchSpec("perception", "crash_me", {"mode": "crash"},
                                                   executable=str(CHILD))),
            "stop_me": launcher.launch(LaunchSpec("action", "stop_me", {"mode": "graceful"},
                                                  executable=str(CHILD))),
        }
        end = time.monotonic() + 10.0
        while time.monotonic() < end:
            started = {e.event.node for e in gateway.log.entries() if e.event.event == "started"}
            if started >= set(handles):
                break
            time.sleep(0.02)
        handles["kill_me"].kill()
        reports = {n: launcher.supervise(h, timeout=15.0) for n, h in handles.items()}
        assert reports["kill_me"].synthesized_event == "shutdown_manual"
        assert reports["crash_me"].synthesized_event == "shutdown_unexpected"
        assert reports["stop_me"].synthesized_event is None

        events = [e.event for e in gateway.log.entries()]
        assert sum(1 for e in events if e.event == "started") == 3
        assert sum(1 for e in events if e.event == "shutdown_manual") == 2  # kill + stop
        assert sum(1 for e in events if e.event == "shutdown_unexpected") == 1  # crash
        for name in handles:
            shutdowns = [e for e in events if e.node == name and e.event.startswith("shutdown_")]
            assert len(shutdowns) == 1, f"{name} has {len(shutdowns)} shutdown events"

        # get_nodes must equal the left-fold of the raw event log
        expected_fold = {}
        for e in events:
            expected_fold[e.node] = {"name": e.node, "kind": e.kind, "event": e.event,
                                     "detail": e.detail, "stamp": e.stamp}
        base = f"http://{gateway.endpoint[0]}:{gateway.endpoint[1]}"
        with httpx.Client(base_url=base, timeout=10.0) as client:
            nodes = {n["name"]: n for n in client.get("/api/nodes").json()["nodes"]}
        assert nodes == expected_fold
    finally:
        gateway.stop()
        master.stop()


@criterion("gateway API")
def test_gateway_api(tmp_path):
    master = Master(bind=("127.0.0.1", 0), port_pool=fresh_port_pool()).start()
    data_dir = tmp_path / "runs"
    gateway = GatewayServer(bind=("127.0.0.1", 0), data_dir=data_dir,
                            master_endpoint=master.endpoint, sink_bind=("127.0.0.1", 0)).start()
    fixture_doc = json.loads((FIXTURES / "karate_program.json").read_text())
    launched = {"gesture_replay", "gesture_katana", "gesture_batting",
                "gesture_hand_up", "gesture_karate", "gesture_stretch_up", "nao"}
    base = f"http://{gateway.endpoint[0]}:{gateway.endpoint[1]}"
    try:
        with httpx.Client(base_url=base, timeout=15.0) as client:
            response = client.post("/api/programs", json=fixture_doc)
            assert response.status_code == 201
            run_id = response.json()["run_id"]

            # SSE client attaches first, then the run starts; all 7 started
            # events must stream in within a second of the start call.
            with client.stream("GET", "/api/events",
                               timeout=httpx.Timeout(5.0, read=10.0)) as stream:
                lines = stream.iter_lines()
                t0 = time.monotonic()
                start_response = client.post(f"/api/runs/{run_id}/start")
                assert start_response.status_code == 200
                seen = set()
                for line in lines:
                    if line.startswith("data:"):
                        doc = json.loads(line[5:].strip())
                        if doc["event"] == "started" and doc["node"] in launched:
                            seen.add(doc["node"])
                    if seen == launched:
                        break
                    assert time.monotonic() - t0 < 5.0, f"only saw {sorted(seen)}"
                elapsed = time.monotonic() - t0
            assert seen == launched
            assert elapsed < 1.0, f"started events took {elapsed:.3f}s"
            client.post(f"/api/runs/{run_id}/stop")
    finally:
        gateway.stop()

    # restart on the same data directory: the run must still be listed
    gateway2 = GatewayServer(bind=("127.0.0.1", 0), data_dir=data_dir,
                             master_endpoint=master.endpoint, sink_bind=("127.0.0.1", 0)).start()
    try:
        base2 = f"http://{gateway2.endpoint[0]}:{gateway2.endpoint[1]}"
        with httpx.Client(base_url=base2, timeout=10.0) as client:
            runs = client.get("/api/runs").json()["runs"]
            assert any(r["run_id"] == run_id for r in runs)
    finally:
        gateway2.stop()
        master.stop()
