/**
 * Workspace model for the three block canvases: behavior rules, robot
 * connections, and node launches.
 *
 * Blocks may be partially filled while the user drags things around; a
 * block only takes part in code generation once it is *complete*.
 * Incomplete blocks get a warning badge, real inconsistencies (dangling
 * robot references, duplicate names) get an error badge, and generation
 * stays disabled while any error badge shows.
 */

export type NodeType = "sensory" | "perception" | "cognitive" | "action";
export type Primitive = "say" | "posture" | "animation" | "wait";
export type Mode = "sequence" | "parallel";
export type Scalar = string | number | boolean | null;
export type Canvas = "behaviour" | "robots" | "launch";

export const NODE_TYPES: NodeType[] = ["sensory", "perception", "cognitive", "action"];
export const PRIMITIVES: Primitive[] = ["say", "posture", "animation", "wait"];
export const GESTURE_LABELS = ["katana", "batting", "hand_up", "karate", "stretch_up"];

/** The trigger slot of a rule block: fire when message[key] === equals. */
export interface TriggerSlot {
  topic: string;
  key: string;
  equals: Scalar;
}

/** One action slot: a primitive plus its arguments, aimed at robots. */
export interface ActionBlock {
  primitive: Primitive;
  args: Record<string, Scalar>;
  robots: string[];
}

/** A behavior rule: one trigger slot, ordered action slots. */
export interface RuleBlock {
  trigger: TriggerSlot | null;
  mode: Mode;
  actions: ActionBlock[];
}

export interface RobotBlock {
  name: string;
  ip: string;
  simulated: boolean;
}

export interface LaunchBlock {
  type: NodeType;
  name: string;
  args: Record<string, Scalar>;
}

export interface Workspace {
  behaviour: RuleBlock[];
  robots: RobotBlock[];
  launch: LaunchBlock[];
}

export function emptyWorkspace(): Workspace {
  return { behaviour: [], robots: [], launch: [] };
}

export type Severity = "warning" | "error";

/** A validation finding attached to a block (or the workspace itself). */
export interface Issue {
  severity: Severity;
  canvas: Canvas | "workspace";
  index: number;
  actionIndex?: number;
  message: string;
}

function primitiveArgsProblem(primitive: Primitive, args: Record<string, Scalar>): string | null {
  if (primitive === "say") {
    if (typeof args.text !== "string" || args.text === "") return "say needs text";
  } else if (primitive === "posture" || primitive === "animation") {
    if (typeof args.name !== "string" || args.name === "") return `${primitive} needs a name`;
  } else if (primitive === "wait") {
    if (typeof args.seconds !== "number" || args.seconds < 0) return "wait needs seconds >= 0";
  }
  return null;
}

/** A robot block participates in generation once it has a name. */
export function robotComplete(block: RobotBlock): boolean {
  return block.name !== "";
}

/** A launch block participates once it has a name. */
export function launchComplete(block: LaunchBlock): boolean {
  return block.name !== "";
}

/**
 * A rule block is complete iff its trigger slot and at least one action
 * slot are filled, every action has valid args and at least one robot.
 */
export function ruleComplete(rule: RuleBlock): boolean {
  if (rule.trigger === null) return false;
  if (rule.trigger.topic === "" || rule.trigger.key === "") return false;
  if (rule.actions.length === 0) return false;
  return rule.actions.every(
    (a) => a.robots.length > 0 && primitiveArgsProblem(a.primitive, a.args) === null,
  );
}

/** All findings for the workspace, warnings and errors together. */
export function validateWorkspace(ws: Workspace): Issue[] {
  const issues: Issue[] = [];
  const robotNames = new Set<string>();
  ws.robots.forEach((robot, index) => {
    if (!robotComplete(robot)) {
      issues.push({ severity: "warning", canvas: "robots", index, message: "robot needs a name" });
      return;
    }
    if (robotNames.has(robot.name)) {
      issues.push({
        severity: "error", canvas: "robots", index,
        message: `duplicate robot name "${robot.name}"`,
      });
    }
    robotNames.add(robot.name);
  });

  const launchNames = new Set<string>(robotNames);
  ws.launch.forEach((block, index) => {
    if (!launchComplete(block)) {
      issues.push({ severity: "warning", canvas: "launch", index, message: "node needs a name" });
      return;
    }
    if (launchNames.has(block.name)) {
      issues.push({
        severity: "error", canvas: "launch", index,
        message: `duplicate node name "${block.name}"`,
      });
    }
    launchNames.add(block.name);
  });

  ws.behaviour.forEach((rule, index) => {
    if (!ruleComplete(rule)) {
      issues.push({
        severity: "warning", canvas: "behaviour", index,
        message: "rule needs a trigger and at least one filled action",
      });
    }
    rule.actions.forEach((action, actionIndex) => {
      for (const robot of action.robots) {
        if (robot !== "" && !robotNames.has(robot)) {
          issues.push({
            severity: "error", canvas: "behaviour", index, actionIndex,
            message: `action targets robot "${robot}" which is not on the robots canvas`,
          });
        }
      }
    });
  });

  const completeRules = ws.behaviour.filter(ruleComplete);
  if (completeRules.length > 0 && ws.robots.filter(robotComplete).length === 0) {
    issues.push({
      severity: "error", canvas: "workspace", index: -1,
      message: "rules need at least one robot block",
    });
  }
  return issues;
}

export function errorsOf(issues: Issue[]): Issue[] {
  return issues.filter((i) => i.severity === "error");
}

/** Generation is possible when nothing is in error and something is complete. */
export function canGenerate(ws: Workspace): { ok: boolean; hint: string } {
  if (errorsOf(validateWorkspace(ws)).length > 0) {
    return { ok: false, hint: "fix the blocks marked with errors" };
  }
  const anything =
    ws.robots.some(robotComplete) ||
    ws.launch.some(launchComplete) ||
    ws.behaviour.some(ruleComplete);
  if (!anything) {
    return { ok: false, hint: "drag in a robot, a node or a rule to get started" };
  }
  return { ok: true, hint: "" };
}
