/**
 * Wire protocol for the handover bridge, mirrored by hand from the server's
 * JSON Schema definitions. The hello frame carries a protocol version; the
 * client refuses to run against any other version.
 */

export const PROTOCOL_VERSION = 1;

export interface PoseJson {
  t: [number, number, number];
  q: [number, number, number, number];
}

export interface Bounds {
  x: [number, number];
  y: [number, number];
  yaw_deg: number;
}

export interface HelloFrame {
  kind: "hello";
  version: number;
  object: string;
  control_rate: number;
  bounds: Bounds;
}

export type Phase = "Ready" | "Tracking" | "Search" | "Grasping" | "Placing";

export const PHASES: Phase[] = ["Ready", "Tracking", "Search", "Grasping", "Placing"];

export interface StateFrame {
  kind: "state";
  tick: number;
  phase: Phase;
  object: PoseJson;
  target: { x: number; y: number; yaw_deg: number };
  ee: PoseJson;
  tracked: PoseJson | null;
  predicted: PoseJson | null;
  gripper: "open" | "closing" | "closed";
  successes: number;
  attempts: number;
  last_approach_time: number | null;
}

export interface ErrorFrame {
  kind: "error";
  message: string;
}

export type ServerFrame = HelloFrame | StateFrame | ErrorFrame;

export interface DragMessage {
  kind: "drag";
  x: number;
  y: number;
  yaw: number;
}

export interface ResetMessage {
  kind: "reset";
}

export interface ConfigMessage {
  kind: "config";
  prediction: boolean;
}

export type ClientMessage = DragMessage | ResetMessage | ConfigMessage;

export class ProtocolError extends Error {}

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isNumberArray(v: unknown, n: number): boolean {
  return Array.isArray(v) && v.length === n && v.every(isFiniteNumber);
}

export function isPose(v: unknown): v is PoseJson {
  if (typeof v !== "object" || v === null) return false;
  const p = v as Record<string, unknown>;
  return isNumberArray(p.t, 3) && isNumberArray(p.q, 4);
}

function parseHello(m: Record<string, unknown>): HelloFrame {
  if (m.version !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported protocol version ${String(m.version)}`);
  }
  if (typeof m.object !== "string" || !isFiniteNumber(m.control_rate)) {
    throw new ProtocolError("malformed hello frame");
  }
  const b = m.bounds as Record<string, unknown> | undefined;
  if (
    b === undefined ||
    !isNumberArray(b.x, 2) ||
    !isNumberArray(b.y, 2) ||
    !isFiniteNumber(b.yaw_deg)
  ) {
    throw new ProtocolError("malformed hello bounds");
  }
  return m as unknown as HelloFrame;
}

function parseState(m: Record<string, unknown>): StateFrame {
  if (!Number.isInteger(m.tick) || (m.tick as number) < 0) {
    throw new ProtocolError("state frame needs a non-negative integer tick");
  }
  if (!PHASES.includes(m.phase as Phase)) {
    throw new ProtocolError(`unknown phase ${String(m.phase)}`);
  }
  if (!isPose(m.object) || !isPose(m.ee)) {
    throw new ProtocolError("state frame needs object and ee poses");
  }
  if (m.tracked !== null && !isPose(m.tracked)) {
    throw new ProtocolError("tracked must be a pose or null");
  }
  if (m.predicted !== null && !isPose(m.predicted)) {
    throw new ProtocolError("predicted must be a pose or null");
  }
  const t = m.target as Record<string, unknown> | undefined;
  if (
    t === undefined ||
    !isFiniteNumber(t.x) ||
    !isFiniteNumber(t.y) ||
    !isFiniteNumber(t.yaw_deg)
  ) {
    throw new ProtocolError("state frame needs a target");
  }
  if (!["open", "closing", "closed"].includes(m.gripper as string)) {
    throw new ProtocolError(`unknown gripper state ${String(m.gripper)}`);
  }
  if (!Number.isInteger(m.successes) || !Number.isInteger(m.attempts)) {
    throw new ProtocolError("state frame needs integer counters");
  }
  if (m.last_approach_time !== null && !isFiniteNumber(m.last_approach_time)) {
    throw new ProtocolError("last_approach_time must be a number or null");
  }
  return m as unknown as StateFrame;
}

/** Parse one raw server frame; throws ProtocolError on anything malformed. */
export function parseServerFrame(raw: string): ServerFrame {
  let m: unknown;
  try {
    m = JSON.parse(raw);
  } catch {
    throw new ProtocolError("frame is not valid JSON");
  }
  if (typeof m !== "object" || m === null) {
    throw new ProtocolError("frame must be a JSON object");
  }
  const rec = m as Record<string, unknown>;
  switch (rec.kind) {
    case "hello":
      return parseHello(rec);
    case "state":
      return parseState(rec);
    case "error":
      if (typeof rec.message !== "string") {
        throw new ProtocolError("error frame needs a message");
      }
      return rec as unknown as ErrorFrame;
    default:
      throw new ProtocolError(`unknown frame kind ${String(rec.kind)}`);
  }
}

/** Build a drag message clamped to the session bounds. */
export function dragMessage(bounds: Bounds, x: number, y: number, yaw: number): DragMessage {
  const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));
  return {
    kind: "drag",
    x: clamp(x, bounds.x[0], bounds.x[1]),
    y: clamp(y, bounds.y[0], bounds.y[1]),
    yaw: clamp(yaw, -bounds.yaw_deg, bounds.yaw_deg),
  };
}
