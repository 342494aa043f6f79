// End-to-end: spawn the interpreter's bridge on the ping/pong program and
// drive it exactly as the browser client would (same record construction),
// asserting the disabled/enabled button states arrive as revision pushes.
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, ChildProcess } from "node:child_process";

import { findTag } from "../src/client.js";
import { Snapshot, eventRecordFor } from "../src/protocol.js";

const PORT = 8651;
const BASE = `http://127.0.0.1:${PORT}`;
let server: ChildProcess;

async function waitForServer(tries = 60): Promise<void> {
  for (let i = 0; i < tries; i++) {
    try {
      const r = await fetch(`${BASE}/snapshot`);
      if (r.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((res) => setTimeout(res, 250));
  }
  throw new Error("mvu serve did not come up");
}

class SnapshotStream {
  private frames: Snapshot[] = [];
  private waiters: ((s: Snapshot) => void)[] = [];
  private controller = new AbortController();

  async start(): Promise<void> {
    const resp = await fetch(`${BASE}/events`, { signal: this.controller.signal });
    const reader = resp.body!.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    void (async () => {
      try {
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let idx: number;
          while ((idx = buffer.indexOf("\n\n")) >= 0) {
            const frame = buffer.slice(0, idx);
            buffer = buffer.slice(idx + 2);
            if (frame.startsWith("data: ")) {
              const snap = JSON.parse(frame.slice(6)) as Snapshot;
              const waiter = this.waiters.shift();
              if (waiter) waiter(snap);
              else this.frames.push(snap);
            }
          }
        }
      } catch {
        /* aborted */
      }
    })();
  }

  next(timeoutMs = 10000): Promise<Snapshot> {
    const queued = this.frames.shift();
    if (queued) return Promise.resolve(queued);
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("no revision push")), timeoutMs);
      this.waiters.push((s) => {
        clearTimeout(timer);
        resolve(s);
      });
    });
  }

  stop(): void {
    this.controller.abort();
  }
}

beforeAll(async () => {
  server = spawn("python3", ["-m", "mvu.cli", "serve", "pingpong", "--listen", `127.0.0.1:${PORT}`], {
    cwd: "..",
    stdio: "ignore",
  });
  await waitForServer();
}, 30000);

afterAll(() => {
  server?.kill();
});

describe("live loop against mvu serve", () => {
  it("click disables within one push, re-enables after the pong, double-click is absorbed", async () => {
    const stream = new SnapshotStream();
    await stream.start();
    const initial = await stream.next();
    const button = findTag(initial, "button");
    expect(button).not.toBeNull();
    expect(button!.handlers.map((h) => h.eventName)).toEqual(["click"]);

    // what the UI's click listener would post
    const record = eventRecordFor(button!.handlers[0], button!.nodeId, {});
    expect(record).toEqual({ target: button!.nodeId, event: "click", payload: null });
    // double click: fire twice without waiting; the second lands against a
    // stale revision and must be absorbed safely by the interpreter
    const p1 = fetch(`${BASE}/event`, { method: "POST", body: JSON.stringify(record) });
    const p2 = fetch(`${BASE}/event`, { method: "POST", body: JSON.stringify(record) });

    const disabled = await stream.next();
    const dBtn = findTag(disabled, "button")!;
    expect(dBtn.attributes).toEqual([{ key: "disabled", value: "true" }]);
    expect(dBtn.handlers).toEqual([]);

    const enabled = await stream.next();
    const eBtn = findTag(enabled, "button")!;
    expect(eBtn.handlers.map((h) => h.eventName)).toEqual(["click"]);

    const [r1, r2] = await Promise.all([p1, p2]);
    expect(r1.ok && r2.ok).toBe(true);

    // after everything settles the client and server agree on a final,
    // enabled snapshot: no desynchronisation
    let last = enabled;
    for (;;) {
      try {
        last = await stream.next(1500);
      } catch {
        break;
      }
    }
    const final = (await (await fetch(`${BASE}/snapshot`)).json()) as Snapshot;
    expect(final.revision).toBe(last.revision);
    expect(findTag(final, "button")!.handlers.length).toBe(1);
    stream.stop();
  }, 30000);
});
