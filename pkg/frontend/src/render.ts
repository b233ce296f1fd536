/**
 * Top-down canvas rendering of the session: workspace bounds, the object,
 * the robot end effector, and the tracked/predicted grasp markers. The 2D
 * context is a narrow injectable interface so rendering is testable headless.
 */

import type { StateFrame, HelloFrame, PoseJson } from "./protocol.js";
import { type Mapping, workspaceToPixel } from "./transform.js";

export interface Context2DLike {
  fillStyle: string | unknown;
  strokeStyle: string | unknown;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

const PHASE_COLORS: Record<string, string> = {
  Ready: "#888888",
  Tracking: "#2266cc",
  Search: "#cc8800",
  Grasping: "#22aa44",
  Placing: "#8844cc",
};

function dot(ctx: Context2DLike, m: Mapping, p: PoseJson, r: number, color: string): void {
  const [px, py] = workspaceToPixel(m, p.t[0], p.t[1]);
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(px, py, r, 0, 2 * Math.PI);
  ctx.fill();
}

export function render(
  ctx: Context2DLike,
  width: number,
  height: number,
  hello: HelloFrame,
  frame: StateFrame | null,
  m: Mapping,
): void {
  ctx.clearRect(0, 0, width, height);
  const [x0, y0] = workspaceToPixel(m, hello.bounds.x[0], hello.bounds.y[1]);
  const [x1, y1] = workspaceToPixel(m, hello.bounds.x[1], hello.bounds.y[0]);
  ctx.strokeStyle = "#444444";
  ctx.lineWidth = 1;
  ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
  ctx.fillStyle = "#222222";
  ctx.font = "14px sans-serif";
  if (frame === null) {
    ctx.fillText(`waiting for ${hello.object}...`, 12, 20);
    return;
  }
  // object, end effector, and grasp markers
  dot(ctx, m, frame.object, 10, "#333333");
  dot(ctx, m, frame.ee, 7, PHASE_COLORS[frame.phase] ?? "#000000");
  if (frame.tracked !== null) dot(ctx, m, frame.tracked, 4, "#2266cc");
  if (frame.predicted !== null) dot(ctx, m, frame.predicted, 4, "#22aa44");
  // drag target crosshair
  const [tx, ty] = workspaceToPixel(m, frame.target.x, frame.target.y);
  ctx.strokeStyle = "#aa2222";
  ctx.beginPath();
  ctx.moveTo(tx - 6, ty);
  ctx.lineTo(tx + 6, ty);
  ctx.moveTo(tx, ty - 6);
  ctx.lineTo(tx, ty + 6);
  ctx.stroke();
  ctx.fillStyle = "#222222";
  const rate =
    frame.attempts > 0 ? ((100 * frame.successes) / frame.attempts).toFixed(0) + "%" : "-";
  const approach =
    frame.last_approach_time !== null ? frame.last_approach_time.toFixed(2) + "s" : "-";
  ctx.fillText(
    `${hello.object}  phase ${frame.phase}  gripper ${frame.gripper}  ` +
      `grasps ${frame.successes}/${frame.attempts} (${rate})  approach ${approach}`,
    12,
    20,
  );
}
