/**
 * DOM wiring for the console: three block canvases, the program
 * preview, run controls, and the live event table.
 *
 * One store, one render pass for structure; field edits mutate the
 * workspace in place and refresh the derived panels (badges, preview,
 * buttons) without rebuilding the inputs under the user's cursor.
 */

import { generateProgram, importProgram } from "./codegen.js";
import { EventLogStore } from "./eventlog.js";
import { GatewayClient, GatewayError, pointerToBlock } from "./gateway.js";
import {
  ActionBlock,
  Canvas,
  GESTURE_LABELS,
  Issue,
  LaunchBlock,
  NODE_TYPES,
  PRIMITIVES,
  RuleBlock,
  Workspace,
  canGenerate,
  validateWorkspace,
} from "./model.js";
import { SseClient } from "./sse.js";
import { StringStore, loadWorkspace, saveWorkspace } from "./storage.js";

interface Highlight {
  canvas: Canvas;
  index: number;
  actionIndex?: number;
}

export class Console {
  ws: Workspace;
  readonly events = new EventLogStore();
  private highlight: Highlight | null = null;
  private runBanner = "";
  private sse: SseClient | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly gateway: GatewayClient,
    private readonly store: StringStore,
    private readonly eventsUrl: string,
  ) {
    this.ws = loadWorkspace(store);
  }

  boot(): void {
    this.render();
    this.sse = new SseClient(this.eventsUrl, {
      onMessage: (m) => {
        if (this.events.ingest(m)) this.renderEvents();
      },
      onState: (state) => {
        const banner = this.root.querySelector("#conn-banner")!;
        banner.textContent = state === "open" ? "" : `event stream: ${state}`;
        banner.className = state === "open" ? "banner hidden" : "banner";
      },
    });
    this.sse.start();
  }

  private persist(): void {
    saveWorkspace(this.ws, this.store);
  }

  private mutate(structural: boolean): void {
    this.persist();
    if (structural) this.render();
    else this.refreshDerived();
  }

  // --- rendering -------------------------------------------------------

  render(): void {
    this.root.innerHTML = `
      <header>
        <h1>nodeprim console</h1>
        <div id="conn-banner" class="banner hidden"></div>
      </header>
      <main>
        <section class="canvas" id="canvas-behaviour">
          <h2>behaviour</h2><div class="blocks"></div>
          <button data-add="rule">+ rule</button>
        </section>
        <section class="canvas" id="canvas-robots">
          <h2>robots</h2><div class="blocks"></div>
          <button data-add="robot">+ robot</button>
        </section>
        <section class="canvas" id="canvas-launch">
          <h2>launch</h2><div class="blocks"></div>
          <button data-add="launch">+ node</button>
        </section>
        <section class="panel">
          <h2>program</h2>
          <pre id="program-preview"></pre>
          <div id="generate-hint" class="hint"></div>
          <div class="row">
            <button id="submit-start">submit &amp; start</button>
            <button id="stop-run" disabled>stop</button>
            <span id="run-state" class="badge gray">no run</span>
          </div>
          <div id="submit-error" class="hint"></div>
          <div class="row">
            <button id="export-json">export</button>
            <button id="import-json">import</button>
          </div>
          <textarea id="import-area" rows="4" placeholder="paste ProgramDoc JSON here, then press import"></textarea>
        </section>
        <section class="panel">
          <h2>node state</h2>
          <table id="event-table">
            <thead><tr><th>#</th><th>time</th><th>node</th><th>event</th><th>detail</th></tr></thead>
            <tbody></tbody>
          </table>
          <div id="event-empty" class="hint">no events yet - start a run</div>
        </section>
      </main>`;

    this.renderBlocks();
    this.refreshDerived();
    this.renderEvents();
    this.wireButtons();
  }

  private renderBlocks(): void {
    const behaviour = this.blocksEl("behaviour");
    behaviour.innerHTML = "";
    this.ws.behaviour.forEach((rule, i) => behaviour.appendChild(this.ruleEl(rule, i)));
    const robots = this.blocksEl("robots");
    robots.innerHTML = "";
    this.ws.robots.forEach((robot, i) => {
      const el = this.blockShell("robots", i, "robot");
      el.appendChild(this.textInput(robot.name, "name", (v) => { robot.name = v; this.mutate(false); }));
      el.appendChild(this.textInput(robot.ip, "ip", (v) => { robot.ip = v; this.mutate(false); }));
      el.appendChild(this.checkbox(robot.simulated, "simulated", (v) => { robot.simulated = v; this.mutate(false); }));
      robots.appendChild(el);
    });
    const launch = this.blocksEl("launch");
    launch.innerHTML = "";
    this.ws.launch.forEach((block, i) => launch.appendChild(this.launchEl(block, i)));
  }

  private ruleEl(rule: RuleBlock, index: number): HTMLElement {
    const el = this.blockShell("behaviour", index, "rule");
    const when = document.createElement("div");
    when.className = "slot";
    when.appendChild(this.label("when"));
    if (rule.trigger === null) {
      const pick = document.createElement("select");
      pick.appendChild(new Option("choose a trigger...", ""));
      for (const label of GESTURE_LABELS) pick.appendChild(new Option(`gesture: ${label}`, `g:${label}`));
      pick.appendChild(new Option("custom topic/key/value", "custom"));
      pick.onchange = () => {
        if (pick.value === "") return;
        rule.trigger = pick.value.startsWith("g:")
          ? { topic: "gesture", key: "gesture", equals: pick.value.slice(2) }
          : { topic: "", key: "", equals: "" };
        this.mutate(true);
      };
      when.appendChild(pick);
    } else {
      const t = rule.trigger;
      when.appendChild(this.textInput(t.topic, "topic", (v) => { t.topic = v; this.mutate(false); }));
      when.appendChild(this.textInput(t.key, "key", (v) => { t.key = v; this.mutate(false); }));
      when.appendChild(this.textInput(String(t.equals ?? ""), "equals", (v) => { t.equals = v; this.mutate(false); }));
    }
    el.appendChild(when);

    const mode = document.createElement("select");
    mode.appendChild(new Option("sequence", "sequence"));
    mode.appendChild(new Option("parallel", "parallel"));
    mode.value = rule.mode;
    mode.onchange = () => { rule.mode = mode.value as RuleBlock["mode"]; this.mutate(false); };
    el.appendChild(mode);

    rule.actions.forEach((action, actionIndex) => {
      el.appendChild(this.actionEl(rule, action, index, actionIndex));
    });
    const add = document.createElement("button");
    add.textContent = "+ action";
    add.onclick = () => {
      rule.actions.push({ primitive: "say", args: { text: "" }, robots: [] });
      this.mutate(true);
    };
    el.appendChild(add);
    return el;
  }

  private actionEl(rule: RuleBlock, action: ActionBlock, index: number, actionIndex: number): HTMLElement {
    const el = document.createElement("div");
    el.className = "slot action";
    el.dataset.action = String(actionIndex);
    const pick = document.createElement("select");
    for (const p of PRIMITIVES) pick.appendChild(new Option(p, p));
    pick.value = action.primitive;
    pick.onchange = () => {
      action.primitive = pick.value as ActionBlock["primitive"];
      action.args = pick.value === "say" ? { text: "" }
        : pick.value === "wait" ? { seconds: 0 } : { name: "" };
      this.mutate(true);
    };
    el.appendChild(pick);
    for (const key of Object.keys(action.args)) {
      el.appendChild(this.textInput(String(action.args[key] ?? ""), key, (v) => {
        action.args[key] = action.primitive === "wait" && key === "seconds" ? Number(v) : v;
        this.mutate(false);
      }));
    }
    el.appendChild(this.textInput(action.robots.join(","), "robots (comma separated)", (v) => {
      action.robots = v.split(",").map((s) => s.trim()).filter((s) => s !== "");
      this.mutate(false);
    }));
    const drop = document.createElement("button");
    drop.textContent = "x";
    drop.title = "remove action";
    drop.onclick = () => { rule.actions.splice(actionIndex, 1); this.mutate(true); };
    el.appendChild(drop);
    return el;
  }

  private launchEl(block: LaunchBlock, index: number): HTMLElement {
    const el = this.blockShell("launch", index, "launch");
    const pick = document.createElement("select");
    for (const t of NODE_TYPES) pick.appendChild(new Option(t, t));
    pick.value = block.type;
    pick.onchange = () => { block.type = pick.value as LaunchBlock["type"]; this.mutate(false); };
    el.appendChild(pick);
    el.appendChild(this.textInput(block.name, "name", (v) => { block.name = v; this.mutate(false); }));
    el.appendChild(this.textInput(
      Object.entries(block.args).map(([k, v]) => `${k}=${v}`).join(","),
      "args k=v,k=v",
      (v) => {
        block.args = {};
        for (const pair of v.split(",")) {
          const eq = pair.indexOf("=");
          if (eq > 0) block.args[pair.slice(0, eq).trim()] = pair.slice(eq + 1).trim();
        }
        this.mutate(false);
      },
    ));
    return el;
  }

  private blockShell(canvas: Canvas, index: number, title: string): HTMLElement {
    const el = document.createElement("div");
    el.className = "block";
    el.dataset.canvas = canvas;
    el.dataset.index = String(index);
    const head = document.createElement("div");
    head.className = "block-head";
    head.textContent = title;
    const badge = document.createElement("span");
    badge.className = "issue-badge hidden";
    head.appendChild(badge);
    const drop = document.createElement("button");
    drop.textContent = "x";
    drop.title = `remove ${title}`;
    drop.onclick = () => {
      (this.ws[canvas] as unknown[]).splice(index, 1);
      this.mutate(true);
    };
    head.appendChild(drop);
    el.appendChild(head);
    return el;
  }

  // --- derived panels ----------------------------------------------------

  refreshDerived(): void {
    const issues = validateWorkspace(this.ws);
    this.paintBadges(issues);
    const gate = canGenerate(this.ws);
    const preview = this.root.querySelector("#program-preview") as HTMLElement;
    const hint = this.root.querySelector("#generate-hint") as HTMLElement;
    const submit = this.root.querySelector("#submit-start") as HTMLButtonElement;
    if (gate.ok) {
      preview.textContent = generateProgram(this.ws);
      hint.textContent = "";
      submit.disabled = false;
    } else {
      preview.textContent = "";
      hint.textContent = gate.hint;
      submit.disabled = true;
    }
  }

  private paintBadges(issues: Issue[]): void {
    for (const el of Array.from(this.root.querySelectorAll(".block"))) {
      const badge = el.querySelector(".issue-badge") as HTMLElement;
      const canvas = (el as HTMLElement).dataset.canvas as Canvas;
      const index = Number((el as HTMLElement).dataset.index);
      const mine = issues.filter((i) => i.canvas === canvas && i.index === index);
      const highlighted = this.highlight !== null
        && this.highlight.canvas === canvas && this.highlight.index === index;
      el.classList.toggle("has-error", mine.some((i) => i.severity === "error") || highlighted);
      el.classList.toggle("has-warning", mine.some((i) => i.severity === "warning"));
      if (mine.length > 0) {
        badge.textContent = mine[0].message;
        badge.className = `issue-badge ${mine.some((i) => i.severity === "error") ? "error" : "warning"}`;
      } else if (highlighted) {
        badge.textContent = "the gateway rejected this block";
        badge.className = "issue-badge error";
      } else {
        badge.className = "issue-badge hidden";
      }
    }
  }

  renderEvents(): void {
    const tbody = this.root.querySelector("#event-table tbody") as HTMLElement;
    const empty = this.root.querySelector("#event-empty") as HTMLElement;
    empty.classList.toggle("hidden", this.events.rows.length > 0);
    tbody.innerHTML = "";
    for (const row of this.events.rows) {
      const tr = document.createElement("tr");
      tr.innerHTML = `<td>${row.seq}</td><td>${row.stamp.toFixed(3)}</td>` +
        `<td>${escapeHtml(row.node)}</td>` +
        `<td><span class="badge ${row.badge}">${row.event}</span></td>` +
        `<td>${escapeHtml(row.detail)}</td>`;
      tbody.appendChild(tr);
    }
  }

  // --- actions -----------------------------------------------------------

  private wireButtons(): void {
    for (const btn of Array.from(this.root.querySelectorAll("[data-add]"))) {
      (btn as HTMLButtonElement).onclick = () => {
        const what = (btn as HTMLElement).dataset.add;
        if (what === "rule") this.ws.behaviour.push({ trigger: null, mode: "sequence", actions: [] });
        if (what === "robot") this.ws.robots.push({ name: "", ip: "127.0.0.1", simulated: true });
        if (what === "launch") this.ws.launch.push({ type: "perception", name: "", args: {} });
        this.mutate(true);
      };
    }
    (this.root.querySelector("#submit-start") as HTMLButtonElement).onclick = () => void this.submit();
    (this.root.querySelector("#export-json") as HTMLButtonElement).onclick = () => {
      const area = this.root.querySelector("#import-area") as HTMLTextAreaElement;
      area.value = generateProgram(this.ws);
    };
    (this.root.querySelector("#import-json") as HTMLButtonElement).onclick = () => {
      const area = this.root.querySelector("#import-area") as HTMLTextAreaElement;
      try {
        this.ws = importProgram(JSON.parse(area.value));
        this.highlight = null;
        this.mutate(true);
      } catch (err) {
        (this.root.querySelector("#submit-error") as HTMLElement).textContent =
          `import failed: ${String(err)}`;
      }
    };
  }

  private async submit(): Promise<void> {
    const errorEl = this.root.querySelector("#submit-error") as HTMLElement;
    const stateEl = this.root.querySelector("#run-state") as HTMLElement;
    const stopBtn = this.root.querySelector("#stop-run") as HTMLButtonElement;
    errorEl.textContent = "";
    this.highlight = null;
    let program: string;
    try {
      program = generateProgram(this.ws);
    } catch (err) {
      errorEl.textContent = String(err);
      return;
    }
    stateEl.textContent = "submitting...";
    stateEl.className = "badge amber";
    try {
      const outcome = await this.gateway.submitAndStart(program);
      stateEl.textContent = `${outcome.runId.slice(0, 8)}: ${outcome.state}`;
      stateEl.className = `badge ${outcome.state === "running" ? "green" : "gray"}`;
      stopBtn.disabled = false;
      stopBtn.onclick = () => void this.gateway.stopRun(outcome.runId).then((state) => {
        stateEl.textContent = `${outcome.runId.slice(0, 8)}: ${state}`;
        stateEl.className = "badge gray";
        stopBtn.disabled = true;
      });
    } catch (err) {
      stateEl.textContent = "failed";
      stateEl.className = "badge red";
      if (err instanceof GatewayError) {
        errorEl.textContent = err.retryable
          ? `${err.detail} - check the gateway and try again`
          : err.detail;
        if (err.path !== null) {
          const ref = pointerToBlock(err.path);
          if (ref !== null) {
            this.highlight = ref;
            this.refreshDerived();
          }
        }
      } else {
        errorEl.textContent = String(err);
      }
    }
  }

  private blocksEl(canvas: Canvas): HTMLElement {
    return this.root.querySelector(`#canvas-${canvas} .blocks`) as HTMLElement;
  }

  private label(text: string): HTMLElement {
    const el = document.createElement("span");
    el.className = "slot-label";
    el.textContent = text;
    return el;
  }

  private textInput(value: string, placeholder: string, commit: (v: string) => void): HTMLInputElement {
    const input = document.createElement("input");
    input.type = "text";
    input.value = value;
    input.placeholder = placeholder;
    input.oninput = () => commit(input.value);
    return input;
  }

  private checkbox(value: boolean, title: string, commit: (v: boolean) => void): HTMLElement {
    const wrap = document.createElement("label");
    wrap.className = "check";
    const input = document.createElement("input");
    input.type = "checkbox";
    input.checked = value;
    input.onchange = () => commit(input.checked);
    wrap.appendChild(input);
    wrap.appendChild(document.createTextNode(title));
    return wrap;
  }
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => `&#${ch.charCodeAt(0)};`);
}
