import { describe, expect, it } from "vitest";

import { GatewayClient, GatewayError, pointerToBlock } from "../src/gateway.js";

function fakeFetch(routes: Record<string, { status: number; body: unknown }>): typeof fetch {
  return (async (input: RequestInfo | URL) => {
    const url = String(input);
    for (const [suffix, reply] of Object.entries(routes)) {
      if (url.endsWith(suffix)) {
        return new Response(JSON.stringify(reply.body), {
          status: reply.status,
          headers: { "Content-Type": "application/json" },
        });
      }
    }
    return new Response("{}", { status: 404 });
  }) as typeof fetch;
}

describe("submit and start", () => {
  it("posts the program then starts the run", async () => {
    const client = new GatewayClient("http://gw", fakeFetch({
      "/api/programs": { status: 201, body: { run_id: "abc123", state: "stored" } },
      "/api/runs/abc123/start": { status: 200, body: { run_id: "abc123", state: "running" } },
    }));
    const outcome = await client.submitAndStart("{}");
    expect(outcome).toEqual({ runId: "abc123", state: "running" });
  });

  it("surfaces schema violations with their pointer path", async () => {
    const client = new GatewayClient("http://gw", fakeFetch({
      "/api/programs": {
        status: 400,
        body: { error: "schema_violation", path: "/robots", detail: "/robots: missing" },
      },
    }));
    const error = await client.submitAndStart("{}").catch((e) => e as GatewayError);
    expect(error).toBeInstanceOf(GatewayError);
    expect((error as GatewayError).kind).toBe("schema");
    expect((error as GatewayError).path).toBe("/robots");
    expect((error as GatewayError).retryable).toBe(false);
  });

  it("flags network failures as retryable", async () => {
    const failing = (async () => { throw new TypeError("fetch failed"); }) as unknown as typeof fetch;
    const client = new GatewayClient("http://gw", failing);
    const error = await client.submitAndStart("{}").catch((e) => e as GatewayError);
    expect((error as GatewayError).kind).toBe("network");
    expect((error as GatewayError).retryable).toBe(true);
  });

  it("wraps wrong-state replies as http errors", async () => {
    const client = new GatewayClient("http://gw", fakeFetch({
      "/api/runs/r1/start": { status: 409, body: { error: "wrong_state", detail: "run is running" } },
    }));
    const error = await client.startRun("r1").catch((e) => e as GatewayError);
    expect((error as GatewayError).kind).toBe("http");
    expect((error as GatewayError).status).toBe(409);
  });
});

describe("pointer to block mapping", () => {
  it("maps robot pointers", () => {
    expect(pointerToBlock("/robots/2")).toEqual({ canvas: "robots", index: 2 });
    expect(pointerToBlock("/robots/0/name")).toEqual({ canvas: "robots", index: 0 });
  });

  it("maps launch pointers", () => {
    expect(pointerToBlock("/launch/1/args")).toEqual({ canvas: "launch", index: 1 });
  });

  it("maps rule action pointers down to the action slot", () => {
    expect(pointerToBlock("/rules/0/do/1/args")).toEqual({
      canvas: "behaviour", index: 0, actionIndex: 1,
    });
    expect(pointerToBlock("/rules/3/when/topic")).toEqual({ canvas: "behaviour", index: 3 });
  });

  it("maps a bare collection pointer to the first block", () => {
    expect(pointerToBlock("/robots")).toEqual({ canvas: "robots", index: 0 });
  });

  it("rejects garbage", () => {
    expect(pointerToBlock("")).toBeNull();
    expect(pointerToBlock("/nonsense/1")).toBeNull();
  });
});
