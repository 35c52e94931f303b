/**
 * Executes a scenario against a rowe endpoint over a real WebSocket.
 *
 * The peer deliberately shares nothing with the Python implementation: JSON
 * comes from the runtime, framing from the `ws` package. It speaks the same
 * wire contract — subprotocol "rowe.v1" on upgrade path "/rowe", one JSON
 * object per text frame — and nothing more.
 */

import { once } from "node:events";
import { setTimeout as sleep } from "node:timers/promises";
import WebSocket, { WebSocketServer } from "ws";
import { ANY, matchesSubset, type Message, type Scenario, type Step } from "./scenario.js";

export const SUBPROTOCOL = "rowe.v1";
export const UPGRADE_PATH = "/rowe";

const CONNECT_TIMEOUT_MS = 15_000;
const EXPECT_TIMEOUT_MS = 10_000;

/** A sleep that never keeps the process alive on its own. */
function timer(ms: number): Promise<void> {
  return sleep(ms, undefined, { ref: false });
}

/** A step's expectation was not met; the transcript carries the details. */
export class MismatchError extends Error {}

/** The connection could not be established, broke, or timed out. */
export class TransportError extends Error {}

export interface TranscriptSink {
  line(entry: Record<string, unknown>): void;
}

/** Buffers inbound text frames so `expect` steps can await the next one. */
class FrameInbox {
  private frames: string[] = [];
  private failure: Error | null = null;
  private wakeup: (() => void) | null = null;

  push(text: string): void {
    this.frames.push(text);
    this.wakeup?.();
  }

  fail(err: Error): void {
    if (this.failure === null) {
      this.failure = err;
    }
    this.wakeup?.();
  }

  async next(timeoutMs: number): Promise<string> {
    const deadline = Date.now() + timeoutMs;
    while (this.frames.length === 0) {
      if (this.failure !== null) {
        throw this.failure;
      }
      const remaining = deadline - Date.now();
      if (remaining <= 0) {
        throw new TransportError(`no frame arrived within ${timeoutMs} ms`);
      }
      await new Promise<void>((resolve) => {
        this.wakeup = resolve;
        setTimeout(resolve, Math.min(remaining, 250));
      });
      this.wakeup = null;
    }
    return this.frames.shift()!;
  }
}

async function openAsClient(host: string, port: number): Promise<{ ws: WebSocket; wss: null }> {
  const ws = new WebSocket(`ws://${host}:${port}${UPGRADE_PATH}`, [SUBPROTOCOL]);
  const opened = new Promise<void>((resolve, reject) => {
    ws.once("open", resolve);
    ws.once("error", (err) => reject(new TransportError(`connect failed: ${err.message}`)));
  });
  const expired = timer(CONNECT_TIMEOUT_MS).then(() => {
    throw new TransportError(`connect timed out after ${CONNECT_TIMEOUT_MS} ms`);
  });
  await Promise.race([opened, expired]);
  return { ws, wss: null };
}

async function openAsServer(
  host: string,
  port: number,
  sink: TranscriptSink,
): Promise<{ ws: WebSocket; wss: WebSocketServer }> {
  const wss = new WebSocketServer({
    host,
    port,
    path: UPGRADE_PATH,
    handleProtocols: (protocols) => (protocols.has(SUBPROTOCOL) ? SUBPROTOCOL : false),
  });
  try {
    await once(wss, "listening");
  } catch (err) {
    throw new TransportError(`cannot listen on ${host}:${port}: ${(err as Error).message}`);
  }
  sink.line({ event: "listening", port });
  const accepted = new Promise<WebSocket>((resolve) => wss.once("connection", resolve));
  const expired = timer(CONNECT_TIMEOUT_MS).then(() => {
    throw new TransportError(`no peer connected within ${CONNECT_TIMEOUT_MS} ms`);
  });
  const ws = await Promise.race([accepted, expired]);
  return { ws, wss };
}

async function closeSocket(ws: WebSocket): Promise<void> {
  if (ws.readyState === WebSocket.CLOSED) {
    return;
  }
  const closed = once(ws, "close").then(
    () => true,
    () => true,
  );
  ws.close(1000);
  const sawClose = await Promise.race([closed, timer(2000).then(() => false)]);
  if (!sawClose) {
    ws.terminate();
  }
}

export async function runScenario(
  scenario: Scenario,
  host: string,
  port: number,
  sink: TranscriptSink,
): Promise<void> {
  const { ws, wss } =
    scenario.role === "client" ? await openAsClient(host, port) : await openAsServer(host, port, sink);

  const inbox = new FrameInbox();
  ws.on("message", (data, isBinary) => {
    if (isBinary) {
      sink.line({ event: "binary-frame-ignored", bytes: (data as Buffer).length });
      return;
    }
    inbox.push(data.toString());
  });
  ws.on("close", (code) => inbox.fail(new TransportError(`connection closed (code ${code})`)));
  ws.on("error", (err) => inbox.fail(new TransportError(err.message)));

  let lastExpected: Message | null = null;
  try {
    for (let i = 0; i < scenario.steps.length; i++) {
      await runStep(scenario.steps[i], i, ws, inbox, sink, {
        get: () => lastExpected,
        set: (m: Message) => {
          lastExpected = m;
        },
      });
    }
    await closeSocket(ws);
  } finally {
    ws.terminate();
    wss?.close();
  }
}

interface LastExpectedSlot {
  get(): Message | null;
  set(m: Message): void;
}

async function runStep(
  step: Step,
  index: number,
  ws: WebSocket,
  inbox: FrameInbox,
  sink: TranscriptSink,
  last: LastExpectedSlot,
): Promise<void> {
  switch (step.kind) {
    case "send": {
      const frame: Message = { ...step.message };
      if (step.ttl !== undefined) {
        frame["rowe_ttl"] = step.ttl;
      }
      ws.send(JSON.stringify(frame));
      sink.line({ step: index, action: "send", ok: true, frame });
      return;
    }
    case "send_raw":
      ws.send(step.text);
      sink.line({ step: index, action: "send_raw", ok: true, text: step.text });
      return;
    case "expect": {
      const raw = await inbox.next(EXPECT_TIMEOUT_MS);
      let got: unknown;
      try {
        got = JSON.parse(raw);
      } catch {
        sink.line({ step: index, action: "expect", ok: false, expected: step.expected, got_raw: raw });
        throw new MismatchError(`step ${index}: frame is not valid JSON`);
      }
      if (typeof got !== "object" || got === null || Array.isArray(got) || !matchesSubset(got as Message, step.expected)) {
        sink.line({ step: index, action: "expect", ok: false, expected: step.expected, got });
        throw new MismatchError(`step ${index}: frame does not match`);
      }
      sink.line({ step: index, action: "expect", ok: true, got });
      last.set(got as Message);
      return;
    }
    case "reply_to_last": {
      const previous = last.get();
      if (previous === null) {
        throw new TransportError(`step ${index}: reply_to_last with no expected frame before it`);
      }
      const id = previous["message_id"];
      if (typeof id !== "string") {
        throw new TransportError(`step ${index}: last expected frame carries no string message_id`);
      }
      const frame: Message = { ...step.body, in_reply_to: id };
      ws.send(JSON.stringify(frame));
      sink.line({ step: index, action: "reply_to_last", ok: true, frame });
      return;
    }
    case "delay":
      await sleep(step.ms);
      sink.line({ step: index, action: "delay", ok: true, ms: step.ms });
      return;
    case "close":
      await closeSocket(ws);
      sink.line({ step: index, action: "close", ok: true });
      return;
  }
}

export { ANY };
