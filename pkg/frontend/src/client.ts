// Engine protocol client: handshake, strictly increasing outbound seq,
// reconnect with exponential backoff. Works in the browser (native
// WebSocket) and in Node tests (pass a ws constructor).

import { PROTOCOL_SCHEMA_VERSION, type ClientMessage, type ServerMessage } from "./protocol";

type WSCtor = new (url: string) => WebSocketLike;

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export interface ClientOptions {
  url: string;
  onMessage: (msg: ServerMessage) => void;
  onStatus?: (status: "connecting" | "ready" | "closed") => void;
  webSocket?: WSCtor;
  maxBackoffMs?: number;
  reconnect?: boolean;
}

export class EngineClient {
  private ws: WebSocketLike | null = null;
  private seq = 0;
  private attempts = 0;
  private closed = false;
  private readonly opts: ClientOptions;

  constructor(opts: ClientOptions) {
    this.opts = opts;
  }

  connect(): void {
    const ctor =
      this.opts.webSocket ?? (globalThis.WebSocket as unknown as WSCtor | undefined);
    if (!ctor) {
      throw new Error("no WebSocket implementation available");
    }
    this.opts.onStatus?.("connecting");
    const ws = new ctor(this.opts.url);
    this.ws = ws;
    ws.onopen = () => {
      this.attempts = 0;
      this.seq = 0;
      this.send({ type: "hello", schema_version: PROTOCOL_SCHEMA_VERSION } as never);
    };
    ws.onmessage = (ev) => {
      let msg: ServerMessage;
      try {
        msg = JSON.parse(String(ev.data)) as ServerMessage;
      } catch {
        return;
      }
      if (msg.type === "hello_ok") {
        this.opts.onStatus?.("ready");
      }
      this.opts.onMessage(msg);
    };
    ws.onclose = () => {
      this.opts.onStatus?.("closed");
      this.reconnect();
    };
    ws.onerror = () => {
      // onclose follows; nothing to do here
    };
  }

  private reconnect(): void {
    if (this.closed || this.opts.reconnect === false) return;
    const backoff = Math.min(
      1000 * 2 ** this.attempts,
      this.opts.maxBackoffMs ?? 15000,
    );
    this.attempts += 1;
    setTimeout(() => {
      if (!this.closed) this.connect();
    }, backoff);
  }

  send(msg: Omit<ClientMessage, "seq">): number {
    if (!this.ws) throw new Error("not connected");
    this.seq += 1;
    this.ws.send(JSON.stringify({ ...msg, seq: this.seq }));
    return this.seq;
  }

  loadScenario(scenario: unknown): void {
    this.send({ type: "load_scenario", scenario } as never);
  }

  tick(frames = 1): void {
    this.send({ type: "tick", frames } as never);
  }

  hand(position: [number, number, number]): void {
    this.send({ type: "hand", position } as never);
  }

  selectCandidate(index: number): void {
    this.send({ type: "select_candidate", index } as never);
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
