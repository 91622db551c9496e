// Wire protocol for the drilling teleop service: newline-delimited JSON
// over a WebSocket, one object per line. The encoders below produce the
// canonical byte form (compact separators, fixed field order, zero rates
// omitted) that the golden transcripts in docs/transcripts/ pin down, so
// the browser and the service stay byte-compatible.

export const PROTOCOL_VERSION = 1;
export const TICK_RATE_HZ = 50;
export const TICK_MS = 1000 / TICK_RATE_HZ;

export const RATE_KEYS = [
  "outer_translation",
  "inner_translation",
  "outer_roll",
  "inner_roll",
] as const;

export type RateKey = (typeof RATE_KEYS)[number];
export type Rates = Partial<Record<RateKey, number>>;

export type Mode = "idle" | "jogging" | "scripted" | "faulted";

export interface Limits {
  max_translation_speed: number;
  max_roll_speed: number;
  feed_limit: number;
  spindle_max: number;
}

export interface Joints {
  outer_translation: number;
  inner_translation: number;
  outer_roll: number;
  inner_roll: number;
}

export type Vec3 = [number, number, number];

// ---------------------------------------------------------------------------
// Server messages

export interface StateMsg {
  v: number;
  kind: "state";
  seq: number;
  t: number;
  mode: Mode;
  joints: Joints;
  spindle: number;
  tip: Vec3;
  faulted: boolean;
}

// The subtype lives in the `event` field; the remaining fields depend on it.
export interface EventMsg {
  v: number;
  kind: "event";
  seq: number;
  t: number;
  event: string;
  // connected
  session?: string;
  limits?: Limits;
  scenarios?: string[];
  // command replies
  reason?: string;
  scenario?: string;
  phases?: string[];
  completed?: boolean;
  // simulator events
  phase?: string;
  joints?: string[];
  limit?: number;
  fault?: string;
  spindle?: number;
  min_cut_rpm?: number;
  magnitude?: number;
  exceeds_clearance?: boolean;
  tip?: Vec3;
}

export interface SegmentStats {
  mean: number;
  std: number;
}

export interface SegmentReport {
  label: string;
  ideal_length_mm: number | null;
  measured_length_mm: SegmentStats;
  length_error_pct: number | null;
  ideal_radius_mm: number | null;
  measured_radius_mm: SegmentStats;
  radius_error_pct: number | null;
  drilled_diameter_mm: SegmentStats | null;
}

export interface MetricsReport {
  runs_used: number;
  segments: SegmentReport[];
  notes: string[];
}

export interface MetricsMsg {
  v: number;
  kind: "metrics";
  seq: number;
  t: number;
  scenario: string;
  faulted: boolean;
  flagged: boolean;
  carved_voxels: number;
  drilling_time: number | null;
  plane_angle_deg: number | null;
  report: MetricsReport | null;
}

export type ProjectionAxis = "z" | "y";

export interface ProjectionMsg {
  v: number;
  kind: "projection";
  seq: number;
  t: number;
  axis: ProjectionAxis;
  x: number;
  y: number;
  width: number;
  height: number;
  full_width: number;
  full_height: number;
  data: string; // base64, width * height bytes, row-major, air fraction 0..255
}

export type ServerMsg = StateMsg | EventMsg | MetricsMsg | ProjectionMsg;

const SERVER_KINDS = new Set(["state", "event", "metrics", "projection"]);

/** Parse one server line; null when it is not a versioned protocol message. */
export function decodeServer(line: string): ServerMsg | null {
  let msg: unknown;
  try {
    msg = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as Record<string, unknown>;
  if (m.v !== PROTOCOL_VERSION) return null;
  if (typeof m.kind !== "string" || !SERVER_KINDS.has(m.kind)) return null;
  if (typeof m.seq !== "number") return null;
  return msg as ServerMsg;
}

// ---------------------------------------------------------------------------
// Client messages

export interface JogMsg {
  v: number;
  kind: "jog";
  rates: Rates;
}

export interface SetSpindleMsg {
  v: number;
  kind: "set_spindle";
  rpm: number;
}

export interface LoadScenarioMsg {
  v: number;
  kind: "load_scenario";
  name: string;
}

export interface BareMsg {
  v: number;
  kind: "start" | "stop" | "reset";
}

export type ClientMsg = JogMsg | SetSpindleMsg | LoadScenarioMsg | BareMsg;

/**
 * Velocity targets, entering jogging mode. Keys follow the joint order
 * and zero rates are left out; JSON.stringify keeps insertion order and
 * never writes a trailing ".0", which is exactly the canonical form.
 */
export function encodeJog(rates: Rates): string {
  const ordered: Partial<Record<RateKey, number>> = {};
  for (const key of RATE_KEYS) {
    const value = rates[key];
    if (value !== undefined && value !== 0) ordered[key] = value;
  }
  return JSON.stringify({ v: PROTOCOL_VERSION, kind: "jog", rates: ordered });
}

export function encodeSetSpindle(rpm: number): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, kind: "set_spindle", rpm });
}

export function encodeLoadScenario(name: string): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, kind: "load_scenario", name });
}

export function encodeStart(): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, kind: "start" });
}

export function encodeStop(): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, kind: "stop" });
}

export function encodeReset(): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, kind: "reset" });
}

/** Canonical line for any client message (used to round-trip transcripts). */
export function encodeClient(msg: ClientMsg): string {
  switch (msg.kind) {
    case "jog":
      return encodeJog(msg.rates);
    case "set_spindle":
      return encodeSetSpindle(msg.rpm);
    case "load_scenario":
      return encodeLoadScenario(msg.name);
    case "start":
      return encodeStart();
    case "stop":
      return encodeStop();
    case "reset":
      return encodeReset();
  }
}
