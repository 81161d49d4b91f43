import { describe, expect, it } from "vitest";

import { EventLogStore, badgeFor } from "../src/eventlog.js";

function message(seq: number, event = "executing", node = "n") {
  return {
    event: "node_state",
    id: seq,
    data: JSON.stringify({ node, kind: "sensory", event, detail: "", stamp: seq / 10 }),
  };
}

describe("badge colors", () => {
  it("maps event classes", () => {
    expect(badgeFor("started")).toBe("green");
    expect(badgeFor("robot_connected")).toBe("green");
    expect(badgeFor("executing")).toBe("amber");
    expect(badgeFor("robot_connection_failed")).toBe("red");
    expect(badgeFor("shutdown_unexpected")).toBe("red");
    expect(badgeFor("shutdown_manual")).toBe("gray");
  });
});

describe("event log store", () => {
  it("appends rows in seq order", () => {
    const store = new EventLogStore();
    for (let i = 1; i <= 5; i++) store.ingest(message(i));
    expect(store.rows.map((r) => r.seq)).toEqual([1, 2, 3, 4, 5]);
    expect(store.gapFree()).toBe(true);
  });

  it("drops replayed duplicates", () => {
    const store = new EventLogStore();
    store.ingest(message(1));
    store.ingest(message(2));
    expect(store.ingest(message(2))).toBeNull();
    expect(store.ingest(message(1))).toBeNull();
    expect(store.rows).toHaveLength(2);
  });

  it("ignores non node_state messages and bad payloads", () => {
    const store = new EventLogStore();
    expect(store.ingest({ event: "other", id: 1, data: "{}" })).toBeNull();
    expect(store.ingest({ event: "node_state", id: 1, data: "not json" })).toBeNull();
    expect(store.rows).toHaveLength(0);
  });

  it("notifies listeners on append", () => {
    const store = new EventLogStore();
    let calls = 0;
    store.onChange(() => { calls += 1; });
    store.ingest(message(1));
    store.ingest(message(1)); // duplicate: no notification
    expect(calls).toBe(1);
  });
});
