/**
 * Minimal Server-Sent Events client over fetch streams.
 *
 * The gateway replays the event log from `Last-Event-ID`, so reconnects
 * resume exactly where the stream broke: the client remembers the last
 * id it saw and sends it back on every (re)connect. Works in the
 * browser and under node, which is what the tests script against.
 */

export interface SseMessage {
  event: string;
  data: string;
  id: number | null;
}

export type ConnectionState = "connecting" | "open" | "retrying" | "closed";

export interface SseOptions {
  onMessage: (message: SseMessage) => void;
  onState?: (state: ConnectionState) => void;
  fetchImpl?: typeof fetch;
  retryMs?: number;
  lastEventId?: number;
}

export class SseClient {
  readonly url: string;
  lastEventId: number | null;
  private readonly onMessage: (message: SseMessage) => void;
  private readonly onState: (state: ConnectionState) => void;
  private readonly fetchImpl: typeof fetch;
  private readonly retryMs: number;
  private stopped = false;
  private controller: AbortController | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(url: string, options: SseOptions) {
    this.url = url;
    this.onMessage = options.onMessage;
    this.onState = options.onState ?? (() => {});
    this.fetchImpl = options.fetchImpl ?? fetch;
    this.retryMs = options.retryMs ?? 1000;
    this.lastEventId = options.lastEventId ?? null;
  }

  start(): void {
    this.stopped = false;
    void this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.controller?.abort();
    this.onState("closed");
  }

  private scheduleRetry(): void {
    if (this.stopped) return;
    this.onState("retrying");
    this.timer = setTimeout(() => void this.connect(), this.retryMs);
  }

  private async connect(): Promise<void> {
    this.onState("connecting");
    this.controller = new AbortController();
    const headers: Record<string, string> = { Accept: "text/event-stream" };
    if (this.lastEventId !== null) {
      headers["Last-Event-ID"] = String(this.lastEventId);
    }
    let response: Response;
    try {
      response = await this.fetchImpl(this.url, {
        headers,
        signal: this.controller.signal,
      });
    } catch {
      this.scheduleRetry();
      return;
    }
    if (!response.ok || response.body === null) {
      this.scheduleRetry();
      return;
    }
    this.onState("open");
    try {
      await this.consume(response.body);
    } catch {
      // fall through to retry: a severed stream is business as usual
    }
    this.scheduleRetry();
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      let split;
      while ((split = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, split);
        buffer = buffer.slice(split + 2);
        this.dispatch(block);
      }
    }
  }

  private dispatch(block: string): void {
    let event = "message";
    let id: number | null = null;
    const data: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith(":")) continue; // heartbeat comment
      const colon = line.indexOf(":");
      if (colon < 0) continue;
      const field = line.slice(0, colon);
      const value = line.slice(colon + 1).replace(/^ /, "");
      if (field === "event") event = value;
      else if (field === "data") data.push(value);
      else if (field === "id") {
        const parsed = Number(value);
        if (Number.isFinite(parsed)) id = parsed;
      }
    }
    if (data.length === 0) return;
    if (id !== null) this.lastEventId = id;
    this.onMessage({ event, data: data.join("\n"), id });
  }
}
