/**
 * Live log fidelity: a scripted gateway emits 25 events and severs the
 * connection partway through; the console view must end up with all 25
 * rows, seq-ordered and gap-free, despite the reconnect replaying an
 * overlapping event.
 */

import { AddressInfo } from "node:net";
import { createServer, Server, ServerResponse } from "node:http";

import { afterEach, describe, expect, it } from "vitest";

import { EventLogStore } from "../src/eventlog.js";
import { ConnectionState, SseClient } from "../src/sse.js";

const TOTAL = 25;
const BREAK_AFTER = 12;

function eventBlock(seq: number): string {
  const data = JSON.stringify({
    node: `node${seq}`, kind: "sensory", event: "executing",
    detail: `step ${seq}`, stamp: seq / 10,
  });
  return `event: node_state\ndata: ${data}\nid: ${seq}\n\n`;
}

/** A gateway stand-in: first connection breaks mid-stream, the retry
 * resumes from Last-Event-ID (replaying that id once, as overlap). */
function scriptedGateway(): { server: Server; connections: () => number } {
  let connections = 0;
  const server = createServer((req, res: ServerResponse) => {
    connections += 1;
    res.writeHead(200, { "Content-Type": "text/event-stream" });
    res.write(": heartbeat\n\n");
    const lastId = Number(req.headers["last-event-id"] ?? 0);
    if (connections === 1) {
      for (let seq = 1; seq <= BREAK_AFTER; seq++) res.write(eventBlock(seq));
      setTimeout(() => res.destroy(), 20); // sever without warning
    } else {
      const from = Math.max(1, lastId); // deliberate one-event overlap
      for (let seq = from; seq <= TOTAL; seq++) res.write(eventBlock(seq));
    }
  });
  return { server, connections: () => connections };
}

async function waitFor(predicate: () => boolean, timeoutMs = 5000): Promise<void> {
  const end = Date.now() + timeoutMs;
  while (!predicate()) {
    if (Date.now() > end) throw new Error("condition never became true");
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

describe("live log fidelity", () => {
  let client: SseClient | null = null;
  let server: Server | null = null;

  afterEach(() => {
    client?.stop();
    server?.close();
  });

  it("shows 25 rows, seq-ordered and gap-free, across a forced reconnect", async () => {
    const gateway = scriptedGateway();
    server = gateway.server;
    await new Promise<void>((resolve) => gateway.server.listen(0, "127.0.0.1", resolve));
    const port = (gateway.server.address() as AddressInfo).port;

    const store = new EventLogStore();
    const states: ConnectionState[] = [];
    client = new SseClient(`http://127.0.0.1:${port}/api/events`, {
      onMessage: (m) => void store.ingest(m),
      onState: (s) => states.push(s),
      retryMs: 25,
    });
    client.start();

    await waitFor(() => store.rows.length === TOTAL);
    expect(gateway.connections()).toBeGreaterThanOrEqual(2); // the break really happened
    expect(store.rows.map((r) => r.seq)).toEqual(
      Array.from({ length: TOTAL }, (_, i) => i + 1),
    );
    expect(store.gapFree()).toBe(true);
    expect(new Set(store.rows.map((r) => r.seq)).size).toBe(TOTAL); // no duplicates
    expect(states).toContain("retrying");
    // rows carry the decoded payloads in order
    expect(store.rows[0].node).toBe("node1");
    expect(store.rows[TOTAL - 1].detail).toBe(`step ${TOTAL}`);
  });

  it("resumes from an explicit last seq without duplicating", async () => {
    const gateway = scriptedGateway();
    server = gateway.server;
    await new Promise<void>((resolve) => gateway.server.listen(0, "127.0.0.1", resolve));
    const port = (gateway.server.address() as AddressInfo).port;

    const store = new EventLogStore();
    // pretend rows 1..12 are already on screen from a previous session
    for (let seq = 1; seq <= BREAK_AFTER; seq++) {
      store.ingest({
        event: "node_state", id: seq,
        data: JSON.stringify({ node: `node${seq}`, kind: "sensory", event: "executing", detail: "", stamp: 0 }),
      });
    }
    client = new SseClient(`http://127.0.0.1:${port}/api/events`, {
      onMessage: (m) => void store.ingest(m),
      retryMs: 25,
      lastEventId: store.lastSeq,
    });
    client.start();
    // connection 1 ignores Last-Event-ID up to the break; the resumed
    // connection replays from it - the store's dedup absorbs both
    await waitFor(() => store.rows.length === TOTAL);
    expect(store.gapFree()).toBe(true);
  });
});
