import random

import pytest

from nodeprim.behavior import BehaviorSpec, RobotFacade
from nodeprim.clock import VirtualClock
from nodeprim.node import node_start, NodeDescriptor
from nodeprim.pubsub import Subscriber
from nodeprim.runner import Stack, drive
from nodeprim.sim import (
    GESTURE_LABELS,
    ConfusionModel,
    GestureClassifier,
    GestureReplayNode,
    GestureScript,
    PerceptualNode,
    ScriptOrder,
    SimRobotConfig,
    SimRobotNode,
)


@pytest.fixture
def robot_rig(vclock, vstack):
    """A sim robot plus a connected facade, on the virtual clock."""
    robot = SimRobotNode(SimRobotConfig("nao"), vstack.master_endpoint,
                         vstack.sink_endpoint, clock=vclock).start()
    ctx = node_start(NodeDescriptor("cog", "cognitive"), vstack.sink_endpoint, clock=vclock)
    facade = RobotFacade("cog", ["nao"], vstack.master_endpoint, clock=vclock, ctx=ctx)
    facade.connect()
    yield vclock, robot, facade
    facade.close()
    robot.stop()
    ctx.close()


class TestSimRobot:
    def test_say_duration_is_chars_times_rate(self, robot_rig):
        clock, robot, facade = robot_rig
        result = drive(clock, lambda: facade.execute(
            BehaviorSpec("a1", "nao", "say", {"text": "Impressive!"})))
        assert result.status == "done"
        assert result.elapsed == pytest.approx(len("Impressive!") * 0.06)
        marks = robot.transcript.entries()
        assert [m["mark"] for m in marks] == ["start", "end"]
        assert marks[1]["stamp"] - marks[0]["stamp"] == pytest.approx(0.66)

    def test_posture_default_duration(self, robot_rig):
        clock, robot, facade = robot_rig
        result = drive(clock, lambda: facade.execute(
            BehaviorSpec("a1", "nao", "posture", {"name": "stand"})))
        assert result.status == "done"
        assert result.elapsed == 1.0

    def test_unknown_primitive_rejected_and_node_keeps_serving(self, robot_rig):
        clock, robot, facade = robot_rig
        facade._pubs["nao"].send_info({"id": "bad1", "robot": "nao", "primitive": "dance", "args": {}})
        result = drive(clock, lambda: facade._await("nao", "bad1", clock.now() + 30.0))
        assert result.status == "error"
        assert "dance" in result.detail
        ok = drive(clock, lambda: facade.execute(BehaviorSpec("a2", "nao", "wait", {"seconds": 0})))
        assert ok.status == "done"
        assert ok.elapsed == 0.0

    def test_transcript_marks_paired_per_id(self, robot_rig):
        clock, robot, facade = robot_rig
        drive(clock, lambda: facade.execute(BehaviorSpec("x1", "nao", "posture", {"name": "sit"})))
        drive(clock, lambda: facade.execute(BehaviorSpec("x2", "nao", "animation", {"name": "cat"})))
        by_id = {}
        for entry in robot.transcript.entries():
            by_id.setdefault(entry["id"], []).append(entry["mark"])
        assert by_id == {"x1": ["start", "end"], "x2": ["start", "end"]}

    def test_durations_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            SimRobotConfig("nao", speech_rate=-0.1)


class TestGestureScript:
    def test_strictly_increasing_required(self):
        with pytest.raises(ScriptOrder):
            GestureScript([(1.0, "karate"), (1.0, "batting")])

    def test_unknown_label_rejected(self):
        with pytest.raises(ScriptOrder):
            GestureScript([(1.0, "moonwalk")])

    def test_doc_roundtrip(self):
        script = GestureScript([(1.0, "hand_up"), (3.0, "karate")])
        assert GestureScript.from_doc(script.to_doc()) == script


class TestGestureReplay:
    def test_messages_spaced_per_script(self, vclock, vstack):
        replay = GestureReplayNode(
            GestureScript([(1.0, "hand_up"), (3.0, "karate")]),
            vstack.master_endpoint, vstack.sink_endpoint, clock=vclock,
        )
        replay.start()
        sub = Subscriber("gesture_truth", "probe", vstack.master_endpoint, clock=vclock)
        assert replay.publisher.wait_for_channels(1)
        stamps = []

        def consume():
            for _ in range(2):
                ok, doc = sub.listen_info(block=True)
                stamps.append((vclock.now(), doc["label"]))
            return stamps

        got = drive(vclock, consume)
        assert got == [(1.0, "hand_up"), (3.0, "karate")]
        assert got[1][0] - got[0][0] == 2.0
        sub.close()
        replay.stop()

    def test_empty_script_clean_shutdown(self, vclock, vstack):
        replay = GestureReplayNode(GestureScript([]), vstack.master_endpoint,
                                   vstack.sink_endpoint, clock=vclock)
        replay.start()
        vclock.run(until=lambda: any(
            e.event.node == "gesture_replay" and e.event.event == "shutdown_manual"
            for e in vstack.log.entries(0)
        ))
        events = [e.event.event for e in vstack.log.entries() if e.event.node == "gesture_replay"]
        assert events == ["started", "shutdown_manual"]


class TestConfusionModel:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(ValueError):
            ConfusionModel({"karate": {"karate": 0.5}})

    def test_unknown_labels_rejected(self):
        with pytest.raises(ValueError):
            ConfusionModel({"vogueing": {"vogueing": 1.0}})
        with pytest.raises(ValueError):
            ConfusionModel({"karate": {"pirouette": 1.0}})

    def test_identity_covers_all_labels(self):
        model = ConfusionModel.identity()
        assert set(model.rows) == set(GESTURE_LABELS)

    def test_typical_model_valid(self):
        model = ConfusionModel.typical()
        assert model.rows["batting"]["batting"] == 0.6


class TestClassifier:
    def test_identity_model_exhaustive(self):
        # every label triggers exactly its own node and no other
        model = ConfusionModel.identity()
        for truth in GESTURE_LABELS:
            for target in GESTURE_LABELS:
                clf = GestureClassifier(target, model, seed=7)
                assert clf.detects(truth) == (truth == target)

    def test_seeded_emission_counts_match_rng_replay(self):
        # oracle: replay the same seeded rng stream and count draws that
        # land in batting's [0, 0.6) slice of the cumulative walk
        model = ConfusionModel({
            "hand_up": {"hand_up": 1.0},
            "karate": {"karate": 1.0},
            "stretch_up": {"stretch_up": 1.0},
            "katana": {"katana": 1.0},
            "batting": {"batting": 0.6, "katana": 0.2, "none": 0.2},
        })
        seed = 42
        rng = random.Random(f"{seed}|batting")
        expected = sum(1 for _ in range(1000) if rng.random() < 0.6)
        clf = GestureClassifier("batting", model, seed=seed)
        fired = sum(1 for _ in range(1000) if clf.detects("batting"))
        assert fired == expected
        assert 560 <= fired <= 640

    def test_rng_streams_differ_per_target(self):
        model = ConfusionModel.typical()
        a = GestureClassifier("batting", model, seed=1)
        b = GestureClassifier("katana", model, seed=1)
        draws_a = [a._rng.random() for _ in range(10)]
        draws_b = [b._rng.random() for _ in range(10)]
        assert draws_a != draws_b


class TestPerceptualNode:
    def test_only_matching_node_triggers(self, vclock, vstack):
        channel = vstack.trigger_channel("gesture")
        replay = GestureReplayNode(GestureScript([(1.0, "karate")]),
                                   vstack.master_endpoint, vstack.sink_endpoint, clock=vclock)
        replay.start()
        nodes = [
            PerceptualNode(label, ConfusionModel.identity(), vstack.master_endpoint,
                           vstack.sink_endpoint, channel.endpoint, clock=vclock)
            for label in GESTURE_LABELS
        ]
        for node in nodes:
            node.start()
        listener = Subscriber("gesture", "listener", vstack.master_endpoint, clock=vclock)
        assert replay.publisher.wait_for_channels(len(nodes))
        assert channel.publisher.wait_for_channels(1)

        def collect():
            triggers = []
            ok, doc = listener.listen_info(block=True)
            triggers.append(doc)
            # drain any (unexpected) follow-ups within one poll window
            while True:
                ok, doc = listener.listen_info(block=False, timeout_ms=100)
                if not ok:
                    return triggers
                triggers.append(doc)

        triggers = drive(vclock, collect)
        assert triggers == [{"gesture": "karate"}]
        listener.close()
        for node in nodes:
            node.stop()
        replay.stop()
