import { describe, expect, it } from "vitest";

import { ViewState } from "../src/state.js";
import type { HelloFrame, StateFrame } from "../src/protocol.js";

const hello: HelloFrame = {
  kind: "hello",
  version: 1,
  object: "box_dense",
  control_rate: 6,
  bounds: { x: [-0.3, 0.3], y: [-0.15, 0.15], yaw_deg: 60 },
};

function frame(tick: number, extra: Partial<StateFrame> = {}): StateFrame {
  const pose = { t: [0, 0, 0.3] as [number, number, number], q: [1, 0, 0, 0] as [number, number, number, number] };
  return {
    kind: "state",
    tick,
    phase: "Tracking",
    object: pose,
    target: { x: 0, y: 0, yaw_deg: 0 },
    ee: pose,
    tracked: null,
    predicted: null,
    gripper: "open",
    successes: 0,
    attempts: 0,
    last_approach_time: null,
    ...extra,
  };
}

describe("ViewState", () => {
  it("ignores state frames before the hello", () => {
    const v = new ViewState();
    expect(v.acceptState(frame(0))).toBe(false);
  });

  it("drops stale and duplicate ticks", () => {
    const v = new ViewState();
    v.acceptHello(hello);
    expect(v.acceptState(frame(5))).toBe(true);
    expect(v.acceptState(frame(5))).toBe(false);
    expect(v.acceptState(frame(4))).toBe(false);
    expect(v.acceptState(frame(6))).toBe(true);
    expect(v.frame?.tick).toBe(6);
  });

  it("a fresh hello resets the tick watermark", () => {
    const v = new ViewState();
    v.acceptHello(hello);
    v.acceptState(frame(100));
    v.acceptHello(hello);
    expect(v.acceptState(frame(0))).toBe(true);
  });

  it("computes stats from the latest frame", () => {
    const v = new ViewState();
    v.acceptHello(hello);
    expect(v.stats().successRate).toBeNull();
    v.acceptState(frame(1, { attempts: 4, successes: 3, last_approach_time: 1.25 }));
    const s = v.stats();
    expect(s.successRate).toBeCloseTo(0.75);
    expect(s.lastApproachTime).toBeCloseTo(1.25);
  });

  it("keeps a bounded error log", () => {
    const v = new ViewState();
    for (let i = 0; i < 50; i++) v.acceptError(`e${i}`);
    expect(v.errors.length).toBe(20);
    expect(v.errors[19]).toBe("e49");
  });
});
