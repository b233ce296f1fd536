/**
 * WebSocket client for the handover bridge. The socket constructor is
 * injectable so the protocol flow is testable without a browser or network.
 *
 * Outbound drags are throttled to at most one per received state frame: the
 * server drains its queue once per tick, so sending faster only builds a
 * backlog that the latency contract then pays for.
 */

import {
  type Bounds,
  type ClientMessage,
  type ServerFrame,
  ProtocolError,
  dragMessage,
  parseServerFrame,
} from "./protocol.js";
import { ViewState } from "./state.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  reconnectDelayMs?: number;
  /** Injectable timer for tests; defaults to setTimeout. */
  schedule?: (fn: () => void, ms: number) => void;
}

export class StudioClient {
  readonly state = new ViewState();
  onrender: (() => void) | null = null;

  private socket: SocketLike | null = null;
  private pendingDrag: { x: number; y: number; yaw: number } | null = null;
  private dragBudget = 0;
  private closed = false;
  private readonly delay: number;
  private readonly schedule: (fn: () => void, ms: number) => void;

  constructor(
    private readonly url: string,
    private readonly makeSocket: SocketFactory,
    opts: ClientOptions = {},
  ) {
    this.delay = opts.reconnectDelayMs ?? 1000;
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
  }

  connect(): void {
    const sock = this.makeSocket(this.url);
    this.socket = sock;
    this.dragBudget = 0;
    sock.onmessage = (ev) => this.handleRaw(ev.data);
    sock.onclose = () => {
      this.socket = null;
      if (!this.closed) this.schedule(() => this.connect(), this.delay);
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
  }

  get bounds(): Bounds | null {
    return this.state.hello?.bounds ?? null;
  }

  /** Record the latest drag target; it is sent on the next state frame. */
  drag(x: number, y: number, yaw: number): void {
    this.pendingDrag = { x, y, yaw };
    this.flushDrag();
  }

  reset(): void {
    this.send({ kind: "reset" });
  }

  setPrediction(enabled: boolean): void {
    this.send({ kind: "config", prediction: enabled });
  }

  private send(msg: ClientMessage): void {
    this.socket?.send(JSON.stringify(msg));
  }

  private flushDrag(): void {
    const b = this.bounds;
    if (this.pendingDrag === null || this.dragBudget <= 0 || b === null) return;
    this.dragBudget -= 1;
    const { x, y, yaw } = this.pendingDrag;
    this.pendingDrag = null;
    this.send(dragMessage(b, x, y, yaw));
  }

  private handleRaw(raw: string): void {
    let frame: ServerFrame;
    try {
      frame = parseServerFrame(raw);
    } catch (err) {
      if (err instanceof ProtocolError) {
        this.state.acceptError(err.message);
        return;
      }
      throw err;
    }
    switch (frame.kind) {
      case "hello":
        this.state.acceptHello(frame);
        break;
      case "state":
        if (this.state.acceptState(frame)) {
          this.dragBudget = 1;
          this.flushDrag();
          this.onrender?.();
        }
        break;
      case "error":
        this.state.acceptError(frame.message);
        break;
    }
  }
}
