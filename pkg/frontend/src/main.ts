// Jog console wiring: DOM in, protocol lines out. All robot data on
// screen comes from the reducer in state.ts; this file only routes
// input events to encoders and view state to elements.

import { SessionClient } from "./client.js";
import {
  Deflection,
  JogController,
  combineDeflections,
  deflectionFromKeys,
  zeroDeflection,
} from "./jog.js";
import {
  TICK_MS,
  encodeLoadScenario,
  encodeReset,
  encodeSetSpindle,
  encodeStart,
  encodeStop,
} from "./protocol.js";
import { applyServer, beginStream, initialUiState } from "./state.js";
import { drawProjection, drawTrajectory, frameFromQuery, metricsLines } from "./views.js";

const ui = initialUiState();
const jog = new JogController();
const frame = frameFromQuery(location.search);

const client = new SessionClient({
  onMessage: (msg) => applyServer(ui, msg),
  onStatus: (status) => {
    ui.connection = status;
    if (status === "disconnected") beginStream(ui);
  },
  onStreamStart: () => {
    beginStream(ui);
    ui.connection = "connecting"; // the hello flips it to connected
  },
});

// -- element lookups ---------------------------------------------------------

const byId = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const urlInput = byId<HTMLInputElement>("url");
const connectBtn = byId<HTMLButtonElement>("connect");
const disconnectBtn = byId<HTMLButtonElement>("disconnect");
const statusPill = byId<HTMLSpanElement>("status");
const faultBanner = byId<HTMLDivElement>("fault-banner");
const faultText = byId<HTMLSpanElement>("fault-text");
const faultReset = byId<HTMLButtonElement>("fault-reset");
const noticeEl = byId<HTMLDivElement>("notice");
const scenarioSelect = byId<HTMLSelectElement>("scenario");
const loadBtn = byId<HTMLButtonElement>("load");
const startBtn = byId<HTMLButtonElement>("start");
const stopBtn = byId<HTMLButtonElement>("stop");
const resetBtn = byId<HTMLButtonElement>("reset");
const spindleInput = byId<HTMLInputElement>("spindle");
const spindleValue = byId<HTMLSpanElement>("spindle-value");
const readout = {
  mode: byId<HTMLSpanElement>("out-mode"),
  time: byId<HTMLSpanElement>("out-time"),
  outerTranslation: byId<HTMLSpanElement>("out-ot"),
  innerTranslation: byId<HTMLSpanElement>("out-it"),
  outerRoll: byId<HTMLSpanElement>("out-or"),
  innerRoll: byId<HTMLSpanElement>("out-ir"),
  tip: byId<HTMLSpanElement>("out-tip"),
  spindle: byId<HTMLSpanElement>("out-spindle"),
  stream: byId<HTMLSpanElement>("out-stream"),
  loaded: byId<HTMLSpanElement>("out-loaded"),
};
const metricsOut = byId<HTMLPreElement>("metrics");
const eventsOut = byId<HTMLPreElement>("events");
const topProj = byId<HTMLCanvasElement>("top-proj");
const topOverlay = byId<HTMLCanvasElement>("top-overlay");
const sideProj = byId<HTMLCanvasElement>("side-proj");
const sideOverlay = byId<HTMLCanvasElement>("side-overlay");

const controlButtons = [loadBtn, startBtn, stopBtn, resetBtn];

if (urlInput.value === "") {
  const host = location.hostname === "" ? "127.0.0.1" : location.hostname;
  urlInput.value = `ws://${host}:8000/session/console`;
}

// -- connection --------------------------------------------------------------

connectBtn.onclick = () => client.connect(urlInput.value);
disconnectBtn.onclick = () => client.disconnect();

// -- scenario and session buttons --------------------------------------------

loadBtn.onclick = () => {
  if (scenarioSelect.value !== "") client.send(encodeLoadScenario(scenarioSelect.value));
};
startBtn.onclick = () => client.send(encodeStart());
stopBtn.onclick = () => client.send(encodeStop());
resetBtn.onclick = () => client.send(encodeReset());
faultReset.onclick = () => client.send(encodeReset());

// -- spindle slider (flushed by the input loop at tick rate) ------------------

let pendingSpindle: number | null = null;
spindleInput.oninput = () => {
  pendingSpindle = Number(spindleInput.value);
  spindleValue.textContent = `${spindleInput.value} rpm`;
};

// -- virtual joysticks ---------------------------------------------------------

function makePad(padId: string, knobId: string, onChange: (x: number, y: number) => void): void {
  const pad = byId<HTMLDivElement>(padId);
  const knob = byId<HTMLDivElement>(knobId);
  let pointerId: number | null = null;

  const setKnob = (x: number, y: number) => {
    const half = pad.clientWidth / 2;
    knob.style.transform = `translate(${x * half * 0.72}px, ${-y * half * 0.72}px)`;
  };

  const update = (ev: PointerEvent) => {
    const rect = pad.getBoundingClientRect();
    let x = ((ev.clientX - rect.left) / rect.width) * 2 - 1;
    let y = -(((ev.clientY - rect.top) / rect.height) * 2 - 1);
    const norm = Math.hypot(x, y);
    if (norm > 1) {
      x /= norm;
      y /= norm;
    }
    setKnob(x, y);
    onChange(x, y);
  };

  const release = () => {
    pointerId = null;
    setKnob(0, 0);
    onChange(0, 0);
  };

  pad.onpointerdown = (ev) => {
    pointerId = ev.pointerId;
    pad.setPointerCapture(ev.pointerId);
    update(ev);
  };
  pad.onpointermove = (ev) => {
    if (pointerId === ev.pointerId) update(ev);
  };
  pad.onpointerup = release;
  pad.onpointercancel = release;
}

const padDeflection: Deflection = zeroDeflection();
makePad("pad-translate", "knob-translate", (x, y) => {
  padDeflection.outer_translation = x;
  padDeflection.inner_translation = y;
});
makePad("pad-roll", "knob-roll", (x, y) => {
  padDeflection.outer_roll = x;
  padDeflection.inner_roll = y;
});

// -- keyboard (mirrors the joystick axes) -------------------------------------

const pressedKeys = new Set<string>();
const boundCodes = new Set([
  "ArrowRight",
  "ArrowLeft",
  "ArrowUp",
  "ArrowDown",
  "KeyW",
  "KeyA",
  "KeyS",
  "KeyD",
]);

window.addEventListener("keydown", (ev) => {
  const target = ev.target as HTMLElement | null;
  if (target !== null && ["INPUT", "SELECT", "TEXTAREA"].includes(target.tagName)) return;
  if (!boundCodes.has(ev.code)) return;
  ev.preventDefault();
  pressedKeys.add(ev.code);
});
window.addEventListener("keyup", (ev) => pressedKeys.delete(ev.code));
window.addEventListener("blur", () => pressedKeys.clear());

// -- input loop: jog stream plus spindle flush, once per tick ------------------

let localNotice: string | null = null;
let localNoticeAt = 0;

setInterval(() => {
  const deflection = combineDeflections(padDeflection, deflectionFromKeys(pressedKeys));
  const mode = ui.last === null ? null : ui.last.mode;
  const decision = jog.update(deflection, mode, ui.limits, performance.now());
  if (decision.line !== null) client.send(decision.line);
  if (decision.notice !== null) {
    localNotice = decision.notice;
    localNoticeAt = performance.now();
  }
  if (pendingSpindle !== null && mode !== "scripted" && mode !== "faulted") {
    if (client.send(encodeSetSpindle(pendingSpindle))) pendingSpindle = null;
  }
}, TICK_MS);

// -- render loop ---------------------------------------------------------------

const drawn = { topFrames: -1, sideFrames: -1, trajectory: -1, metricsSeq: -1, events: -1 };

function fmt(value: number, digits = 2): string {
  return value.toFixed(digits);
}

function render(): void {
  statusPill.textContent = ui.connection;
  statusPill.className = `pill ${ui.connection}`;

  const connected = ui.connection === "connected";
  for (const btn of controlButtons) btn.disabled = !connected;
  spindleInput.disabled = !connected;
  document.body.classList.toggle("offline", !connected);

  if (ui.limits !== null && spindleInput.max !== String(ui.limits.spindle_max)) {
    spindleInput.max = String(ui.limits.spindle_max);
  }

  if (scenarioSelect.options.length !== ui.scenarios.length) {
    scenarioSelect.innerHTML = "";
    for (const name of ui.scenarios) {
      const option = document.createElement("option");
      option.value = name;
      option.textContent = name;
      scenarioSelect.appendChild(option);
    }
  }

  const s = ui.last;
  readout.mode.textContent = s === null ? "-" : s.mode;
  readout.time.textContent = s === null ? "-" : `${fmt(s.t)} s`;
  readout.outerTranslation.textContent = s === null ? "-" : `${fmt(s.joints.outer_translation)} mm`;
  readout.innerTranslation.textContent = s === null ? "-" : `${fmt(s.joints.inner_translation)} mm`;
  readout.outerRoll.textContent = s === null ? "-" : `${fmt(s.joints.outer_roll)} deg`;
  readout.innerRoll.textContent = s === null ? "-" : `${fmt(s.joints.inner_roll)} deg`;
  readout.tip.textContent =
    s === null ? "-" : `(${fmt(s.tip[0])}, ${fmt(s.tip[1])}, ${fmt(s.tip[2])}) mm`;
  readout.spindle.textContent = s === null ? "-" : `${Math.round(s.spindle)} rpm`;
  readout.loaded.textContent = ui.loadedScenario ?? "-";
  readout.stream.textContent =
    ui.nextSeq === null
      ? "-"
      : `seq ${ui.nextSeq - 1}, gaps ${ui.seqGaps}, restarts ${ui.streamRestarts}`;

  const faulted = ui.faultBanner !== null;
  faultBanner.classList.toggle("visible", faulted);
  if (faulted) faultText.textContent = `FAULT: ${ui.faultBanner}`;
  resetBtn.classList.toggle("urgent", faulted);

  const localFresh = localNotice !== null && performance.now() - localNoticeAt < 2500;
  const notice = ui.notice !== null ? ui.notice : localFresh ? localNotice : null;
  noticeEl.textContent = notice ?? "";
  noticeEl.classList.toggle("visible", notice !== null);

  const top = ui.projections.z;
  if ((top === null ? 0 : top.frames) !== drawn.topFrames) {
    drawn.topFrames = top === null ? 0 : top.frames;
    drawProjection(topProj, top);
  }
  const side = ui.projections.y;
  if ((side === null ? 0 : side.frames) !== drawn.sideFrames) {
    drawn.sideFrames = side === null ? 0 : side.frames;
    drawProjection(sideProj, side);
  }
  if (ui.trajectory.length !== drawn.trajectory) {
    drawn.trajectory = ui.trajectory.length;
    if (top !== null && (topOverlay.width !== top.width || topOverlay.height !== top.height)) {
      topOverlay.width = top.width;
      topOverlay.height = top.height;
    }
    if (side !== null && (sideOverlay.width !== side.width || sideOverlay.height !== side.height)) {
      sideOverlay.width = side.width;
      sideOverlay.height = side.height;
    }
    drawTrajectory(topOverlay, ui.trajectory, "z", frame);
    drawTrajectory(sideOverlay, ui.trajectory, "y", frame);
  }

  const metricsSeq = ui.metrics === null ? -1 : ui.metrics.seq;
  if (metricsSeq !== drawn.metricsSeq) {
    drawn.metricsSeq = metricsSeq;
    metricsOut.textContent =
      ui.metrics === null ? "no completed run yet" : metricsLines(ui.metrics).join("\n");
  }

  if (ui.eventLog.length !== drawn.events) {
    drawn.events = ui.eventLog.length;
    eventsOut.textContent = ui.eventLog.slice(-12).join("\n");
    eventsOut.scrollTop = eventsOut.scrollHeight;
  }

  requestAnimationFrame(render);
}

requestAnimationFrame(render);
