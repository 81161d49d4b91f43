/**
 * ProgramDoc generation: the workspace compiled to the gateway's
 * declarative JSON program.
 *
 * The output is canonical: object keys recursively in lexicographic
 * order, compact separators, raw UTF-8. The same workspace always
 * generates byte-identical JSON, and importing a generated document
 * back into a workspace regenerates the identical bytes.
 */

import {
  ActionBlock,
  LaunchBlock,
  type Mode,
  NODE_TYPES,
  PRIMITIVES,
  RobotBlock,
  RuleBlock,
  type Scalar,
  Workspace,
  canGenerate,
  launchComplete,
  robotComplete,
  ruleComplete,
} from "./model.js";

type Json = Scalar | Json[] | { [key: string]: Json };

/** JSON.stringify with recursively sorted object keys and no spaces. */
export function stableStringify(value: Json): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(stableStringify).join(",")}]`;
  }
  const keys = Object.keys(value).sort();
  const body = keys.map((k) => `${JSON.stringify(k)}:${stableStringify(value[k])}`);
  return `{${body.join(",")}}`;
}

export interface ProgramDoc {
  robots: { name: string; ip: string; simulated: boolean }[];
  launch: { type: string; name: string; args: Record<string, Scalar> }[];
  rules: {
    when: { topic: string; key: string; equals: Scalar };
    mode: Mode;
    do: { primitive: string; args: Record<string, Scalar>; robots: string[] }[];
  }[];
}

/**
 * Compile the complete blocks of a workspace into a ProgramDoc.
 * Traversal is deterministic: canvas order robots, launch, behaviour;
 * blocks top to bottom; slots outer to inner.
 */
export function buildProgram(ws: Workspace): ProgramDoc {
  return {
    robots: ws.robots.filter(robotComplete).map((r) => ({
      name: r.name,
      ip: r.ip === "" ? "127.0.0.1" : r.ip,
      simulated: r.simulated,
    })),
    launch: ws.launch.filter(launchComplete).map((l) => ({
      type: l.type,
      name: l.name,
      args: { ...l.args },
    })),
    rules: ws.behaviour.filter(ruleComplete).map((rule) => ({
      when: {
        topic: rule.trigger!.topic,
        key: rule.trigger!.key,
        equals: rule.trigger!.equals,
      },
      mode: rule.mode,
      do: rule.actions.map((a) => ({
        primitive: a.primitive,
        args: { ...a.args },
        robots: [...a.robots],
      })),
    })),
  };
}

/** Canonical ProgramDoc JSON text for the workspace. */
export function generateProgram(ws: Workspace): string {
  const gate = canGenerate(ws);
  if (!gate.ok) {
    throw new Error(`cannot generate: ${gate.hint}`);
  }
  return stableStringify(buildProgram(ws) as unknown as Json);
}

function asRecord(value: unknown, what: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new Error(`${what} must be an object`);
  }
  return value as Record<string, unknown>;
}

function asArray(value: unknown, what: string): unknown[] {
  if (!Array.isArray(value)) throw new Error(`${what} must be an array`);
  return value;
}

function asScalarArgs(value: unknown, what: string): Record<string, Scalar> {
  const record = asRecord(value ?? {}, what);
  const out: Record<string, Scalar> = {};
  for (const [k, v] of Object.entries(record)) {
    if (v !== null && typeof v === "object") throw new Error(`${what}.${k} must be a scalar`);
    out[k] = v as Scalar;
  }
  return out;
}

/**
 * Load a ProgramDoc back into workspace blocks (the inverse of
 * buildProgram for complete blocks).
 */
export function importProgram(doc: unknown): Workspace {
  const program = asRecord(doc, "program");
  const ws: Workspace = { behaviour: [], robots: [], launch: [] };

  for (const entry of asArray(program.robots ?? [], "robots")) {
    const robot = asRecord(entry, "robot");
    const block: RobotBlock = {
      name: String(robot.name ?? ""),
      ip: String(robot.ip ?? "127.0.0.1"),
      simulated: robot.simulated === undefined ? true : Boolean(robot.simulated),
    };
    ws.robots.push(block);
  }

  for (const entry of asArray(program.launch ?? [], "launch")) {
    const launch = asRecord(entry, "launch entry");
    const type = String(launch.type ?? "");
    if (!(NODE_TYPES as string[]).includes(type)) {
      throw new Error(`unknown node type "${type}"`);
    }
    const block: LaunchBlock = {
      type: type as LaunchBlock["type"],
      name: String(launch.name ?? ""),
      args: asScalarArgs(launch.args, "launch args"),
    };
    ws.launch.push(block);
  }

  for (const entry of asArray(program.rules ?? [], "rules")) {
    const rule = asRecord(entry, "rule");
    const when = asRecord(rule.when, "rule.when");
    const mode = rule.mode === undefined ? "sequence" : String(rule.mode);
    if (mode !== "sequence" && mode !== "parallel") {
      throw new Error(`unknown rule mode "${mode}"`);
    }
    const actions: ActionBlock[] = [];
    for (const actionEntry of asArray(rule.do, "rule.do")) {
      const action = asRecord(actionEntry, "action");
      const primitive = String(action.primitive ?? "");
      if (!(PRIMITIVES as string[]).includes(primitive)) {
        throw new Error(`unknown primitive "${primitive}"`);
      }
      actions.push({
        primitive: primitive as ActionBlock["primitive"],
        args: asScalarArgs(action.args, "action args"),
        robots: asArray(action.robots, "action robots").map(String),
      });
    }
    const block: RuleBlock = {
      trigger: {
        topic: String(when.topic ?? ""),
        key: String(when.key ?? ""),
        equals: (when.equals ?? null) as Scalar,
      },
      mode,
      actions,
    };
    ws.behaviour.push(block);
  }
  return ws;
}
