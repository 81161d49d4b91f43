import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { buildProgram, generateProgram, importProgram, stableStringify } from "../src/codegen.js";
import { Workspace } from "../src/model.js";

const FIXTURE_PATH = join(
  dirname(fileURLToPath(import.meta.url)), "..", "..", "fixtures", "karate_program.json",
);
const FIXTURE = readFileSync(FIXTURE_PATH, "utf-8");

/** The workspace a user builds for the karate-reaction scenario. */
function karateWorkspace(): Workspace {
  return {
    behaviour: [
      {
        trigger: { topic: "gesture", key: "gesture", equals: "karate" },
        mode: "sequence",
        actions: [
          { primitive: "say", args: { text: "Impressive!" }, robots: ["nao"] },
          { primitive: "animation", args: { name: "cat" }, robots: ["nao"] },
        ],
      },
    ],
    robots: [{ name: "nao", ip: "127.0.0.1", simulated: true }],
    launch: [
      { type: "sensory", name: "gesture_replay", args: {} },
      { type: "perception", name: "gesture_katana", args: { target: "katana" } },
      { type: "perception", name: "gesture_batting", args: { target: "batting" } },
      { type: "perception", name: "gesture_hand_up", args: { target: "hand_up" } },
      { type: "perception", name: "gesture_karate", args: { target: "karate" } },
      { type: "perception", name: "gesture_stretch_up", args: { target: "stretch_up" } },
    ],
  };
}

describe("stableStringify", () => {
  it("sorts object keys recursively", () => {
    expect(stableStringify({ b: 1, a: { d: 2, c: 3 } })).toBe('{"a":{"c":3,"d":2},"b":1}');
  });

  it("keeps array order", () => {
    expect(stableStringify([3, 1, 2])).toBe("[3,1,2]");
  });

  it("emits compact separators", () => {
    expect(stableStringify({ k: [true, null, "x"] })).toBe('{"k":[true,null,"x"]}');
  });
});

describe("karate codegen fixture", () => {
  it("generates byte-identical JSON to the shared fixture file", () => {
    expect(generateProgram(karateWorkspace())).toBe(FIXTURE);
  });

  it("is deterministic across repeated generation", () => {
    const ws = karateWorkspace();
    expect(generateProgram(ws)).toBe(generateProgram(ws));
  });

  it("is insensitive to object key insertion order", () => {
    const ws = karateWorkspace();
    // rebuild an action's args with reversed key insertion
    ws.behaviour[0].actions[0].args = { text: "Impressive!" };
    const reversed: Record<string, string> = {};
    reversed["text"] = "Impressive!";
    ws.behaviour[0].actions[0].args = reversed;
    expect(generateProgram(ws)).toBe(FIXTURE);
  });

  it("round-trips through import and regenerates identical bytes", () => {
    const ws = importProgram(JSON.parse(FIXTURE));
    expect(generateProgram(ws)).toBe(FIXTURE);
  });

  it("double round-trip is byte-stable", () => {
    const once = generateProgram(importProgram(JSON.parse(FIXTURE)));
    const twice = generateProgram(importProgram(JSON.parse(once)));
    expect(twice).toBe(once);
  });
});

describe("buildProgram", () => {
  it("excludes incomplete blocks", () => {
    const ws = karateWorkspace();
    ws.behaviour.push({ trigger: null, mode: "sequence", actions: [] }); // incomplete
    ws.robots.push({ name: "", ip: "", simulated: true }); // incomplete
    const doc = buildProgram(ws);
    expect(doc.rules).toHaveLength(1);
    expect(doc.robots).toHaveLength(1);
  });

  it("defaults an empty ip", () => {
    const doc = buildProgram({
      behaviour: [], launch: [],
      robots: [{ name: "r", ip: "", simulated: false }],
    });
    expect(doc.robots[0]).toEqual({ name: "r", ip: "127.0.0.1", simulated: false });
  });

  it("rejects unknown node types on import", () => {
    expect(() => importProgram({ robots: [], launch: [{ type: "quantum", name: "x" }], rules: [] }))
      .toThrow(/unknown node type/);
  });
});
