// Pure view state for the jog console. Every field is copied out of
// received protocol messages; nothing here computes kinematics or
// extrapolates, so replaying a recorded transcript through applyServer
// must reproduce exactly what the screen would have shown.

import {
  EventMsg,
  Limits,
  MetricsMsg,
  ProjectionAxis,
  ProjectionMsg,
  ServerMsg,
  StateMsg,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface ProjectionImage {
  width: number; // full_width of the stream
  height: number; // full_height of the stream
  pixels: Uint8Array; // row-major grayscale, air fraction 0..255
  frames: number; // tiles composed so far (render dirtiness counter)
}

export interface UiState {
  connection: ConnectionStatus;
  session: string | null;
  limits: Limits | null;
  scenarios: string[];
  loadedScenario: string | null;
  last: StateMsg | null;
  trajectory: Array<[number, number, number]>; // received tip positions only
  projections: Record<ProjectionAxis, ProjectionImage | null>;
  metrics: MetricsMsg | null;
  faultBanner: string | null;
  notice: string | null;
  eventLog: string[];
  nextSeq: number | null;
  seqGaps: number;
  streamRestarts: number;
}

const EVENT_LOG_LIMIT = 200;
const TRAJECTORY_LIMIT = 50000;

export function initialUiState(): UiState {
  return {
    connection: "disconnected",
    session: null,
    limits: null,
    scenarios: [],
    loadedScenario: null,
    last: null,
    trajectory: [],
    projections: { z: null, y: null },
    metrics: null,
    faultBanner: null,
    notice: null,
    eventLog: [],
    nextSeq: null,
    seqGaps: 0,
    streamRestarts: 0,
  };
}

/**
 * Drop everything derived from the state stream. Called when a socket
 * (re)opens and when the sequence counter restarts: either way the data
 * on screen belongs to a dead timeline, and the new hello plus the next
 * full projection frames rebuild it from scratch.
 */
export function beginStream(ui: UiState): void {
  ui.session = null;
  ui.limits = null;
  ui.scenarios = [];
  ui.loadedScenario = null;
  ui.last = null;
  ui.trajectory = [];
  ui.projections = { z: null, y: null };
  ui.metrics = null;
  ui.faultBanner = null;
  ui.nextSeq = null;
}

function logEvent(ui: UiState, t: number, text: string): void {
  ui.eventLog.push(`${t.toFixed(2)}s  ${text}`);
  if (ui.eventLog.length > EVENT_LOG_LIMIT) {
    ui.eventLog.splice(0, ui.eventLog.length - EVENT_LOG_LIMIT);
  }
}

function decodeBase64(data: string): Uint8Array {
  const text = atob(data);
  const out = new Uint8Array(text.length);
  for (let i = 0; i < text.length; i++) out[i] = text.charCodeAt(i);
  return out;
}

function applyEvent(ui: UiState, msg: EventMsg): void {
  switch (msg.event) {
    case "connected":
      ui.connection = "connected";
      ui.session = msg.session ?? null;
      ui.limits = msg.limits ?? null;
      ui.scenarios = msg.scenarios ?? [];
      logEvent(ui, msg.t, `connected to session ${msg.session}`);
      break;
    case "rejected":
      ui.notice = `rejected: ${msg.reason}`;
      logEvent(ui, msg.t, ui.notice);
      break;
    case "scenario_loaded":
      ui.loadedScenario = msg.scenario ?? null;
      ui.notice = null;
      logEvent(ui, msg.t, `loaded ${msg.scenario} (${(msg.phases ?? []).join(" > ")})`);
      break;
    case "script_start":
      ui.metrics = null;
      logEvent(ui, msg.t, `script ${msg.scenario} started`);
      break;
    case "script_stop":
      logEvent(ui, msg.t, "script aborted");
      break;
    case "stopped":
      logEvent(ui, msg.t, "stopped");
      break;
    case "reset":
      // Joints rezero and the phantom refills, so the trail and the old
      // projections no longer describe anything on the server. The next
      // due projection frames arrive full.
      ui.faultBanner = null;
      ui.notice = null;
      ui.metrics = null;
      ui.trajectory = [];
      ui.projections = { z: null, y: null };
      logEvent(ui, msg.t, "reset");
      break;
    case "fault":
      ui.faultBanner = msg.fault ?? "fault";
      logEvent(ui, msg.t, `FAULT: ${ui.faultBanner}`);
      break;
    case "clamp":
      logEvent(ui, msg.t, `clamp: ${msg.reason} (${(msg.joints ?? []).join(", ")})`);
      break;
    case "phase_start":
      logEvent(ui, msg.t, `phase ${msg.phase} started`);
      break;
    case "phase_end":
      logEvent(ui, msg.t, `phase ${msg.phase} ${msg.completed ? "completed" : "ended"}`);
      break;
    case "discontinuity":
      logEvent(
        ui,
        msg.t,
        `discontinuity in ${msg.phase}: ${msg.magnitude?.toFixed(3)} mm` +
          (msg.exceeds_clearance ? " (exceeds clearance)" : ""),
      );
      break;
    case "bone_contact":
      logEvent(ui, msg.t, "bone contact");
      break;
    default:
      logEvent(ui, msg.t, `event ${msg.event}`);
  }
}

function applyProjection(ui: UiState, msg: ProjectionMsg): void {
  let image = ui.projections[msg.axis];
  if (image === null || image.width !== msg.full_width || image.height !== msg.full_height) {
    image = {
      width: msg.full_width,
      height: msg.full_height,
      pixels: new Uint8Array(msg.full_width * msg.full_height),
      frames: 0,
    };
    ui.projections[msg.axis] = image;
  }
  // Patch placement: the tile covers columns x..x+width at rows y..y+height.
  const patch = decodeBase64(msg.data);
  for (let row = 0; row < msg.height; row++) {
    const src = row * msg.width;
    const dst = (msg.y + row) * image.width + msg.x;
    image.pixels.set(patch.subarray(src, src + msg.width), dst);
  }
  image.frames += 1;
}

/** Fold one server message into the view state (mutates in place). */
export function applyServer(ui: UiState, msg: ServerMsg): void {
  if (ui.nextSeq !== null && msg.seq < ui.nextSeq) {
    // The per-session counter is gapless and never restarts on reset, so
    // a smaller seq means a new session appeared behind the same socket.
    // Resync: drop the dead timeline and rebuild from this stream.
    ui.streamRestarts += 1;
    beginStream(ui);
  } else if (ui.nextSeq !== null && msg.seq > ui.nextSeq) {
    ui.seqGaps += msg.seq - ui.nextSeq;
  }
  ui.nextSeq = msg.seq + 1;

  switch (msg.kind) {
    case "state":
      ui.last = msg;
      ui.trajectory.push(msg.tip);
      if (ui.trajectory.length > TRAJECTORY_LIMIT) {
        ui.trajectory.splice(0, ui.trajectory.length - TRAJECTORY_LIMIT);
      }
      // The fault event that names the cause normally precedes the first
      // faulted state; this is a fallback so the banner can never lag.
      if (msg.faulted && ui.faultBanner === null) ui.faultBanner = "faulted";
      break;
    case "event":
      applyEvent(ui, msg);
      break;
    case "metrics":
      ui.metrics = msg;
      logEvent(ui, msg.t, `metrics for ${msg.scenario}`);
      break;
    case "projection":
      applyProjection(ui, msg);
      break;
  }
}
