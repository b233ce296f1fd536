/**
 * Mapping between workspace coordinates (meters, y up) and canvas pixels
 * (y down). The workspace bounds are fit into the viewport with uniform
 * scale and a margin, centered on both axes.
 */

import type { Bounds } from "./protocol.js";

export interface Viewport {
  width: number;
  height: number;
  margin: number;
}

export interface Mapping {
  scale: number; // pixels per meter
  offsetX: number;
  offsetY: number;
}

export function fitMapping(bounds: Bounds, view: Viewport): Mapping {
  const spanX = bounds.x[1] - bounds.x[0];
  const spanY = bounds.y[1] - bounds.y[0];
  const usableW = view.width - 2 * view.margin;
  const usableH = view.height - 2 * view.margin;
  const scale = Math.min(usableW / spanX, usableH / spanY);
  const cx = (bounds.x[0] + bounds.x[1]) / 2;
  const cy = (bounds.y[0] + bounds.y[1]) / 2;
  return {
    scale,
    offsetX: view.width / 2 - cx * scale,
    offsetY: view.height / 2 + cy * scale,
  };
}

export function workspaceToPixel(m: Mapping, x: number, y: number): [number, number] {
  return [m.offsetX + x * m.scale, m.offsetY - y * m.scale];
}

export function pixelToWorkspace(m: Mapping, px: number, py: number): [number, number] {
  return [(px - m.offsetX) / m.scale, (m.offsetY - py) / m.scale];
}
