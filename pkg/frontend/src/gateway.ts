/**
 * Thin client for the gateway's HTTP API, plus the mapping from the
 * gateway's JSON-pointer validation errors back to workspace blocks.
 */

import type { Canvas } from "./model.js";

export interface SubmitOutcome {
  runId: string;
  state: string;
}

export type GatewayFailure = "schema" | "http" | "network";

export class GatewayError extends Error {
  readonly kind: GatewayFailure;
  readonly status: number | null;
  readonly path: string | null;
  readonly detail: string;

  constructor(kind: GatewayFailure, detail: string, status: number | null = null,
              path: string | null = null) {
    super(detail);
    this.kind = kind;
    this.status = status;
    this.path = path;
    this.detail = detail;
  }

  /** Network failures are worth a retry button; schema errors are not. */
  get retryable(): boolean {
    return this.kind === "network";
  }
}

export class GatewayClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async post(path: string, body: string | null): Promise<Record<string, unknown>> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.base}${path}`, {
        method: "POST",
        headers: body === null ? {} : { "Content-Type": "application/json" },
        body,
      });
    } catch (err) {
      throw new GatewayError("network", `gateway unreachable: ${String(err)}`);
    }
    let doc: Record<string, unknown> = {};
    try {
      doc = (await response.json()) as Record<string, unknown>;
    } catch {
      // non-JSON error bodies surface as plain HTTP failures below
    }
    if (!response.ok) {
      const detail = String(doc.detail ?? `gateway returned ${response.status}`);
      if (doc.error === "schema_violation") {
        throw new GatewayError("schema", detail, response.status, String(doc.path ?? ""));
      }
      throw new GatewayError("http", detail, response.status);
    }
    return doc;
  }

  async submitProgram(programJson: string): Promise<string> {
    const doc = await this.post("/api/programs", programJson);
    return String(doc.run_id);
  }

  async startRun(runId: string): Promise<string> {
    const doc = await this.post(`/api/runs/${runId}/start`, null);
    return String(doc.state);
  }

  async stopRun(runId: string): Promise<string> {
    const doc = await this.post(`/api/runs/${runId}/stop`, null);
    return String(doc.state);
  }

  /** POST the program, then start it; the console's one-click path. */
  async submitAndStart(programJson: string): Promise<SubmitOutcome> {
    const runId = await this.submitProgram(programJson);
    const state = await this.startRun(runId);
    return { runId, state };
  }
}

export interface BlockRef {
  canvas: Canvas;
  index: number;
  actionIndex?: number;
}

/**
 * Map a gateway JSON pointer (e.g. /rules/0/do/1/args) to the block it
 * talks about, so the offending block can be highlighted.
 */
export function pointerToBlock(path: string): BlockRef | null {
  const parts = path.split("/").filter((p) => p !== "");
  if (parts.length === 0) return null;
  const index = parts.length > 1 ? Number(parts[1]) : 0;
  if (!Number.isInteger(index) || index < 0) return null;
  if (parts[0] === "robots") return { canvas: "robots", index };
  if (parts[0] === "launch") return { canvas: "launch", index };
  if (parts[0] === "rules") {
    const ref: BlockRef = { canvas: "behaviour", index };
    if (parts[2] === "do" && Number.isInteger(Number(parts[3]))) {
      ref.actionIndex = Number(parts[3]);
    }
    return ref;
  }
  return null;
}
