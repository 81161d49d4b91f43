/**
 * The live node-state log: an ordered, gap-free projection of the
 * gateway's SSE stream.
 *
 * Rows are keyed by the stream sequence number. Reconnect replay can
 * resend an id we already have; those are dropped, so the view never
 * duplicates and never reorders.
 */

import type { SseMessage } from "./sse.js";

export type Badge = "green" | "amber" | "red" | "gray";

export interface EventRow {
  seq: number;
  node: string;
  kind: string;
  event: string;
  detail: string;
  stamp: number;
  badge: Badge;
}

/** Badge color by event class. */
export function badgeFor(event: string): Badge {
  switch (event) {
    case "started":
    case "robot_connected":
      return "green";
    case "executing":
      return "amber";
    case "robot_connection_failed":
    case "shutdown_unexpected":
      return "red";
    default:
      return "gray"; // shutdown_manual
  }
}

export class EventLogStore {
  readonly rows: EventRow[] = [];
  private listeners: (() => void)[] = [];

  get lastSeq(): number {
    return this.rows.length === 0 ? 0 : this.rows[this.rows.length - 1].seq;
  }

  /** Ingest one SSE message; returns the new row or null if dropped. */
  ingest(message: SseMessage): EventRow | null {
    if (message.event !== "node_state" || message.id === null) return null;
    if (message.id <= this.lastSeq) return null; // replay overlap
    let doc: Record<string, unknown>;
    try {
      doc = JSON.parse(message.data) as Record<string, unknown>;
    } catch {
      return null;
    }
    const event = String(doc.event ?? "");
    const row: EventRow = {
      seq: message.id,
      node: String(doc.node ?? ""),
      kind: String(doc.kind ?? ""),
      event,
      detail: String(doc.detail ?? ""),
      stamp: typeof doc.stamp === "number" ? doc.stamp : 0,
      badge: badgeFor(event),
    };
    this.rows.push(row);
    for (const listener of this.listeners) listener();
    return row;
  }

  /** True iff the row sequence has no holes. */
  gapFree(): boolean {
    return this.rows.every((row, i) => i === 0 || row.seq === this.rows[i - 1].seq + 1);
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }
}
