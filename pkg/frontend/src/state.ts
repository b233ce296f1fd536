/**
 * Client-side view state: the latest accepted state frame plus session
 * metadata from the hello. Frames arriving out of order (stale ticks after a
 * reconnect replay, say) are dropped rather than rendered backwards.
 */

import type { HelloFrame, StateFrame } from "./protocol.js";

export interface Stats {
  attempts: number;
  successes: number;
  successRate: number | null;
  lastApproachTime: number | null;
}

export class ViewState {
  hello: HelloFrame | null = null;
  frame: StateFrame | null = null;
  errors: string[] = [];

  /** A fresh hello (new connection) resets the tick watermark. */
  acceptHello(hello: HelloFrame): void {
    this.hello = hello;
    this.frame = null;
  }

  /** Returns true if the frame was newer than the last accepted one. */
  acceptState(frame: StateFrame): boolean {
    if (this.hello === null) return false;
    if (this.frame !== null && frame.tick <= this.frame.tick) return false;
    this.frame = frame;
    return true;
  }

  acceptError(message: string): void {
    this.errors.push(message);
    if (this.errors.length > 20) this.errors.shift();
  }

  stats(): Stats {
    const f = this.frame;
    if (f === null) {
      return { attempts: 0, successes: 0, successRate: null, lastApproachTime: null };
    }
    return {
      attempts: f.attempts,
      successes: f.successes,
      successRate: f.attempts > 0 ? f.successes / f.attempts : null,
      lastApproachTime: f.last_approach_time,
    };
  }
}
