"""Process entry point for launched nodes (``python -m nodeprim.node_runner``).

The launcher serializes a LaunchSpec into this argument list::

    --kind perception --name gesture_karate
    --master 127.0.0.1:7000 --sink 127.0.0.1:7001
    --arg target=karate --arg seed=42 --arg trigger_sink=127.0.0.1:7002

Child nodes always run on the wall clock; the supervisor kills them.
"""

from __future__ import annotations

import argparse
import sys

from .sim import (
    ConfusionModel,
    GestureReplayNode,
    GestureScript,
    PerceptualNode,
    SimRobotConfig,
    SimRobotNode,
)


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host, int(port)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nodeprim-node", description="run one node process")
    p.add_argument("--kind", required=True, choices=["sensory", "perception", "action"])
    p.add_argument("--name", required=True)
    p.add_argument("--master", required=True, help="master endpoint host:port")
    p.add_argument("--sink", required=True, help="event sink endpoint host:port")
    p.add_argument("--arg", action="append", default=[], metavar="K=V")
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    args = dict(kv.split("=", 1) for kv in ns.arg)
    master = parse_endpoint(ns.master)
    sink = parse_endpoint(ns.sink)

    if ns.kind == "sensory":
        script = GestureScript.load(args["script"]) if "script" in args else GestureScript([])
        node = GestureReplayNode(
            script, master, sink, name=ns.name,
            settle=float(args.get("settle", 0.25)),
        )
        node.start()
        node.join()
        return 0

    if ns.kind == "perception":
        ref = args.get("confusion", "identity")
        model = ConfusionModel.named(ref) if ref in ("identity", "typical") else ConfusionModel.load(ref)
        node = PerceptualNode(
            args["target"], model, master, sink,
            parse_endpoint(args["trigger_sink"]),
            seed=int(args.get("seed", 0)), name=ns.name,
        )
        node.start()
        node.join()
        return 0

    cfg = SimRobotConfig(
        name=args.get("robot", ns.name),
        speech_rate=float(args.get("speech_rate", 0.06)),
        posture_duration=float(args.get("posture_duration", 1.0)),
        animation_duration=float(args.get("animation_duration", 2.0)),
    )
    node = SimRobotNode(cfg, master, sink)
    node.start()
    node.join()
    return 0


if __name__ == "__main__":
    sys.exit(main())
