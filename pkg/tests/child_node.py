#!/usr/bin/env python3
"""Minimal launchable node for supervisor tests.

Announces ``started`` on the event sink, then behaves per --arg mode=...:

    sleep     park until killed
    crash     exit nonzero without announcing shutdown
    graceful  announce its own shutdown_manual and exit 0
"""

import argparse
import os
import time

from nodeprim.node import NodeDescriptor, node_start
from nodeprim.node_runner import parse_endpoint


def main() -> int:
    p = argparse.ArgumentParser()
    p.add_argument("--kind", default="sensory")
    p.add_argument("--name", required=True)
    p.add_argument("--master", required=True)
    p.add_argument("--sink", required=True)
    p.add_argument("--arg", action="append", default=[])
    ns = p.parse_args()
    args = dict(kv.split("=", 1) for kv in ns.arg)
    mode = args.get("mode", "sleep")
    hold = float(args.get("hold", 0.3))

    ctx = node_start(NodeDescriptor(ns.name, ns.kind), parse_endpoint(ns.sink))
    if mode == "crash":
        time.sleep(hold)
        os._exit(3)
    if mode == "graceful":
        time.sleep(hold)
        ctx.shutdown(manual=True, detail="work done")
        return 0
    time.sleep(3600)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
