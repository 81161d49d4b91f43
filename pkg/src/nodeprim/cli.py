"""Command line front door: master, node launcher, gateway, and demos."""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import node_runner
from .behavior import interpret_program
from .gateway import GatewayServer
from .master import Master
from .runner import ProgramRun, Stack, karate_program
from .sim import ConfusionModel, GestureScript


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host, int(port)


def parse_port_range(text: str) -> range:
    lo, _, hi = text.partition("-")
    return range(int(lo), int(hi) + 1)


def cmd_master(ns) -> int:
    master = Master(bind=parse_endpoint(ns.bind), port_pool=parse_port_range(ns.ports)).start()
    print(f"master listening on {master.endpoint[0]}:{master.endpoint[1]} "
          f"(data ports {ns.ports})", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        master.stop()
        return 0


def cmd_launch(ns) -> int:
    argv = ["--kind", ns.type, "--name", ns.name, "--master", ns.master, "--sink", ns.sink]
    for kv in ns.arg:
        argv += ["--arg", kv]
    return node_runner.main(argv)


def cmd_serve(ns) -> int:
    gateway = GatewayServer(
        bind=parse_endpoint(ns.bind),
        data_dir=ns.data,
        master_endpoint=parse_endpoint(ns.master),
        sink_bind=parse_endpoint(ns.sink),
        assets_dir=ns.assets,
    ).start()
    print(f"gateway at http://{gateway.endpoint[0]}:{gateway.endpoint[1]} "
          f"(event sink {gateway.sink_endpoint[0]}:{gateway.sink_endpoint[1]}, runs in {ns.data})",
          flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        gateway.stop()
        return 0


def cmd_demo_gestures(ns) -> int:
    script = GestureScript.load(ns.script) if ns.script else GestureScript([(1.0, "hand_up"), (3.0, "karate")])
    model = (
        ConfusionModel.named(ns.confusion)
        if ns.confusion in ("identity", "typical")
        else ConfusionModel.load(ns.confusion)
    )
    stack = Stack()
    plan = interpret_program(karate_program())
    run = ProgramRun(plan, stack, scripts={"gesture_replay": script}, confusion=model, seed=ns.seed)
    try:
        run.start()
        run.settle()
        run.release()
        last_at = script.entries[-1][0] if script.entries else 0.0
        run.replays[0].join(timeout=last_at + 10.0)
        time.sleep(2.0)  # let trailing actions and results land
    finally:
        run.stop()
        stack.stop()
    print("# node events")
    for entry in stack.log.entries():
        ev = entry.event
        print(f"{entry.seq:4d}  {ev.stamp:10.3f}  {ev.node:<20} {ev.event:<25} {ev.detail}")
    print("# transcript")
    for robot, transcript in sorted(run.transcripts.items()):
        print(transcript.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nodeprim", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    m = sub.add_parser("master", help="run the name server")
    m.add_argument("--bind", default="127.0.0.1:7000")
    m.add_argument("--ports", default="9000-9999", help="data-plane port pool LO-HI")
    m.set_defaults(func=cmd_master)

    l = sub.add_parser("launch", help="run one node in the foreground")
    l.add_argument("--type", required=True, choices=["sensory", "perception", "action"])
    l.add_argument("--name", required=True)
    l.add_argument("--master", default="127.0.0.1:7000")
    l.add_argument("--sink", default="127.0.0.1:7001")
    l.add_argument("--arg", action="append", default=[], metavar="K=V")
    l.set_defaults(func=cmd_launch)

    s = sub.add_parser("serve", help="run the HTTP gateway")
    s.add_argument("--bind", default="127.0.0.1:8080")
    s.add_argument("--data", default="./runs")
    s.add_argument("--master", default="127.0.0.1:7000")
    s.add_argument("--sink", default="127.0.0.1:7001")
    s.add_argument("--assets", default=None, help="directory of console assets for GET /")
    s.set_defaults(func=cmd_serve)

    d = sub.add_parser("demo", help="self-contained demos")
    dsub = d.add_subparsers(dest="demo", required=True)
    g = dsub.add_parser("gestures", help="the gesture-reaction scenario, fully simulated")
    g.add_argument("--script", default=None, help="gesture script JSON file")
    g.add_argument("--confusion", default="identity", help="identity, typical, or a JSON file")
    g.add_argument("--seed", type=int, default=42)
    g.set_defaults(func=cmd_demo_gestures)

    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
