import { describe, expect, it } from "vitest";

import { render, type Context2DLike } from "../src/render.js";
import { fitMapping } from "../src/transform.js";
import type { HelloFrame, StateFrame } from "../src/protocol.js";

class RecordingContext implements Context2DLike {
  fillStyle = "";
  strokeStyle = "";
  lineWidth = 0;
  font = "";
  calls: Array<[string, ...unknown[]]> = [];

  clearRect(...a: number[]): void {
    this.calls.push(["clearRect", ...a]);
  }
  strokeRect(...a: number[]): void {
    this.calls.push(["strokeRect", ...a]);
  }
  beginPath(): void {
    this.calls.push(["beginPath"]);
  }
  arc(...a: number[]): void {
    this.calls.push(["arc", ...a]);
  }
  moveTo(...a: number[]): void {
    this.calls.push(["moveTo", ...a]);
  }
  lineTo(...a: number[]): void {
    this.calls.push(["lineTo", ...a]);
  }
  fill(): void {
    this.calls.push(["fill"]);
  }
  stroke(): void {
    this.calls.push(["stroke"]);
  }
  fillText(text: string, x: number, y: number): void {
    this.calls.push(["fillText", text, x, y]);
  }

  count(name: string): number {
    return this.calls.filter((c) => c[0] === name).length;
  }
}

const hello: HelloFrame = {
  kind: "hello",
  version: 1,
  object: "box_dense",
  control_rate: 6,
  bounds: { x: [-0.3, 0.3], y: [-0.15, 0.15], yaw_deg: 60 },
};

const pose = { t: [0.1, 0.05, 0.3] as [number, number, number], q: [1, 0, 0, 0] as [number, number, number, number] };

const frame: StateFrame = {
  kind: "state",
  tick: 7,
  phase: "Grasping",
  object: pose,
  target: { x: 0.1, y: 0.05, yaw_deg: 0 },
  ee: pose,
  tracked: pose,
  predicted: pose,
  gripper: "closing",
  successes: 2,
  attempts: 3,
  last_approach_time: 1.5,
};

describe("render", () => {
  const m = fitMapping(hello.bounds, { width: 800, height: 500, margin: 30 });

  it("clears, draws bounds, and shows a waiting note before the first frame", () => {
    const ctx = new RecordingContext();
    render(ctx, 800, 500, hello, null, m);
    expect(ctx.count("clearRect")).toBe(1);
    expect(ctx.count("strokeRect")).toBe(1);
    expect(ctx.calls.some((c) => c[0] === "fillText" && String(c[1]).includes("waiting"))).toBe(true);
  });

  it("draws object, ee, tracked, and predicted markers plus the HUD", () => {
    const ctx = new RecordingContext();
    render(ctx, 800, 500, hello, frame, m);
    expect(ctx.count("arc")).toBe(4);
    const hud = ctx.calls.find((c) => c[0] === "fillText");
    expect(String(hud?.[1])).toContain("2/3");
    expect(String(hud?.[1])).toContain("Grasping");
  });

  it("keeps every drawn point inside the viewport", () => {
    const ctx = new RecordingContext();
    render(ctx, 800, 500, hello, frame, m);
    for (const call of ctx.calls) {
      if (call[0] === "arc" || call[0] === "moveTo" || call[0] === "lineTo") {
        const [x, y] = [call[1] as number, call[2] as number];
        expect(x).toBeGreaterThanOrEqual(0);
        expect(x).toBeLessThanOrEqual(800);
        expect(y).toBeGreaterThanOrEqual(0);
        expect(y).toBeLessThanOrEqual(500);
      }
    }
  });
});
