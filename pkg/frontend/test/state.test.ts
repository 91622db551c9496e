import { Buffer } from "node:buffer";
import { describe, expect, it } from "vitest";

import {
  EventMsg,
  Joints,
  ProjectionMsg,
  ServerMsg,
  StateMsg,
  decodeServer,
} from "../src/protocol.js";
import { UiState, applyServer, beginStream, initialUiState } from "../src/state.js";
import { readTranscript } from "./transcripts.js";

function replayServerLines(ui: UiState, name: string): ServerMsg[] {
  const msgs: ServerMsg[] = [];
  for (const step of readTranscript(name)) {
    if (step.role !== "S") continue;
    const msg = decodeServer(step.text);
    expect(msg, step.text.slice(0, 60)).not.toBeNull();
    applyServer(ui, msg as ServerMsg);
    msgs.push(msg as ServerMsg);
  }
  return msgs;
}

function stateAt(seq: number, joints: Joints): StateMsg {
  return {
    v: 1,
    kind: "state",
    seq,
    t: seq * 0.02,
    mode: "idle",
    joints,
    spindle: 0,
    tip: [0, 0, 0],
    faulted: false,
  };
}

const ZERO_JOINTS: Joints = {
  outer_translation: 0,
  inner_translation: 0,
  outer_roll: 0,
  inner_roll: 0,
};

describe("transcript replay", () => {
  it("renders the S2 run exactly as received (pure view)", () => {
    const ui = initialUiState();
    const msgs = replayServerLines(ui, "s2.ndjson");
    const states = msgs.filter((m): m is StateMsg => m.kind === "state");
    const last = states[states.length - 1];

    // The displayed state is the received message, field for field.
    expect(ui.last).toBe(last);
    expect(ui.trajectory.length).toBe(states.length);
    expect(ui.trajectory[ui.trajectory.length - 1]).toEqual(last.tip);

    // Scripted-run agreement: the stream's final joints land within one
    // tick of the scenario targets (outer 40.7 mm, inner 90.7 mm, inner
    // roll 180 deg), the same bound the batch runner is held to.
    const limits = ui.limits;
    expect(limits).not.toBeNull();
    const tickTranslation = limits!.max_translation_speed * 0.02;
    const tickRoll = limits!.max_roll_speed * 0.02;
    const joints = ui.last!.joints;
    expect(Math.abs(joints.outer_translation - 40.7)).toBeLessThanOrEqual(tickTranslation);
    expect(Math.abs(joints.inner_translation - 90.7)).toBeLessThanOrEqual(tickTranslation);
    expect(Math.abs(joints.outer_roll - 0.0)).toBeLessThanOrEqual(tickRoll);
    expect(Math.abs(joints.inner_roll - 180.0)).toBeLessThanOrEqual(tickRoll);

    expect(ui.connection).toBe("connected");
    expect(ui.limits).toEqual({
      max_translation_speed: 5.0,
      max_roll_speed: 60.0,
      feed_limit: 3.0,
      spindle_max: 1000.0,
    });
    expect(ui.scenarios).toEqual(["S1", "S2", "OOP90"]);
    expect(ui.loadedScenario).toBe("S2");
    expect(ui.faultBanner).toBeNull();
    expect(ui.seqGaps).toBe(0);
    expect(ui.streamRestarts).toBe(0);
    expect(ui.nextSeq).toBe(msgs[msgs.length - 1].seq + 1);

    // The run ends with the metrics readout: in-plane S curve with the
    // inner segment on the commanded 50 mm radius.
    expect(ui.metrics).not.toBeNull();
    expect(ui.metrics!.scenario).toBe("S2");
    expect(ui.metrics!.faulted).toBe(false);
    expect(ui.metrics!.plane_angle_deg).toBe(0);
    const segments = ui.metrics!.report!.segments;
    expect(segments[1].label).toBe("inner");
    expect(Math.abs(segments[1].measured_radius_mm.mean - 50.0)).toBeLessThanOrEqual(1.5);
    expect(Math.abs(segments[1].measured_length_mm.mean - 50.0) / 50.0).toBeLessThanOrEqual(0.03);
  });

  it("renders the jog transcript finals and the stop event", () => {
    const ui = initialUiState();
    replayServerLines(ui, "jog.ndjson");
    expect(ui.last!.joints.outer_translation).toBeCloseTo(0.165, 10);
    expect(ui.last!.joints.inner_translation).toBeCloseTo(0.165, 10);
    expect(ui.last!.mode).toBe("idle");
    expect(ui.last!.spindle).toBe(1000);
    expect(ui.eventLog.some((line) => line.includes("stopped"))).toBe(true);
  });

  it("clears the trail and the fault state on reset", () => {
    const ui = initialUiState();
    replayServerLines(ui, "reset.ndjson");
    expect(ui.last!.joints).toEqual(ZERO_JOINTS);
    expect(ui.trajectory.length).toBe(2); // only the post-reset states remain
    expect(ui.metrics).toBeNull();
    expect(ui.faultBanner).toBeNull();
  });
});

describe("stream integrity", () => {
  it("resyncs when the sequence counter restarts", () => {
    const ui = initialUiState();
    replayServerLines(ui, "jog.ndjson");
    expect(ui.trajectory.length).toBe(7);
    // A fresh transcript starts at seq 0 again: new session, full resync.
    replayServerLines(ui, "reset.ndjson");
    expect(ui.streamRestarts).toBe(1);
    expect(ui.trajectory.length).toBe(2);
    expect(ui.limits).not.toBeNull();
    expect(ui.scenarios).toEqual(["S1", "S2", "OOP90"]);
  });

  it("counts sequence gaps but keeps rendering", () => {
    const ui = initialUiState();
    applyServer(ui, stateAt(0, ZERO_JOINTS));
    applyServer(ui, stateAt(3, ZERO_JOINTS));
    expect(ui.seqGaps).toBe(2);
    expect(ui.streamRestarts).toBe(0);
    expect(ui.last!.seq).toBe(3);
  });

  it("drops all stream data when a connection ends (no stale rendering)", () => {
    const ui = initialUiState();
    replayServerLines(ui, "jog.ndjson");
    beginStream(ui);
    expect(ui.last).toBeNull();
    expect(ui.trajectory).toEqual([]);
    expect(ui.projections).toEqual({ z: null, y: null });
    expect(ui.limits).toBeNull();
    expect(ui.metrics).toBeNull();
    expect(ui.loadedScenario).toBeNull();
  });
});

describe("events", () => {
  it("raises the fault banner from the fault event and clears it on reset", () => {
    const ui = initialUiState();
    const fault: EventMsg = {
      v: 1,
      kind: "event",
      seq: 0,
      t: 1.0,
      event: "fault",
      fault: "spindle below cutting speed",
      spindle: 0,
      min_cut_rpm: 600,
    };
    applyServer(ui, fault);
    expect(ui.faultBanner).toBe("spindle below cutting speed");
    expect(ui.eventLog.some((line) => line.includes("FAULT"))).toBe(true);

    const reset: EventMsg = { v: 1, kind: "event", seq: 1, t: 0.0, event: "reset" };
    applyServer(ui, reset);
    expect(ui.faultBanner).toBeNull();
  });

  it("falls back to a generic banner when a faulted state arrives first", () => {
    const ui = initialUiState();
    const msg = stateAt(0, ZERO_JOINTS);
    applyServer(ui, { ...msg, mode: "faulted", faulted: true });
    expect(ui.faultBanner).toBe("faulted");
  });

  it("surfaces rejections as notices and clears them on a loaded scenario", () => {
    const ui = initialUiState();
    const rejected: EventMsg = {
      v: 1,
      kind: "event",
      seq: 0,
      t: 0.0,
      event: "rejected",
      reason: "no scenario loaded",
    };
    applyServer(ui, rejected);
    expect(ui.notice).toBe("rejected: no scenario loaded");

    const loaded: EventMsg = {
      v: 1,
      kind: "event",
      seq: 1,
      t: 0.0,
      event: "scenario_loaded",
      scenario: "S1",
      phases: ["pre-extend", "co-advance"],
    };
    applyServer(ui, loaded);
    expect(ui.notice).toBeNull();
    expect(ui.loadedScenario).toBe("S1");
  });
});

describe("projection images", () => {
  const b64 = (bytes: number[]) => Buffer.from(bytes).toString("base64");
  const full: ProjectionMsg = {
    v: 1,
    kind: "projection",
    seq: 0,
    t: 0.0,
    axis: "z",
    x: 0,
    y: 0,
    width: 3,
    height: 2,
    full_width: 3,
    full_height: 2,
    data: b64([10, 20, 30, 40, 50, 60]),
  };

  it("composes the full first frame and later patch tiles", () => {
    const ui = initialUiState();
    applyServer(ui, full);
    expect(Array.from(ui.projections.z!.pixels)).toEqual([10, 20, 30, 40, 50, 60]);
    expect(ui.projections.y).toBeNull();

    const patch: ProjectionMsg = {
      ...full,
      seq: 1,
      x: 1,
      y: 1,
      width: 2,
      height: 1,
      data: b64([255, 254]),
    };
    applyServer(ui, patch);
    expect(Array.from(ui.projections.z!.pixels)).toEqual([10, 20, 30, 40, 255, 254]);
    expect(ui.projections.z!.frames).toBe(2);
  });

  it("keeps the two view axes independent", () => {
    const ui = initialUiState();
    applyServer(ui, full);
    const side: ProjectionMsg = { ...full, seq: 1, axis: "y", data: b64([1, 2, 3, 4, 5, 6]) };
    applyServer(ui, side);
    expect(Array.from(ui.projections.z!.pixels)).toEqual([10, 20, 30, 40, 50, 60]);
    expect(Array.from(ui.projections.y!.pixels)).toEqual([1, 2, 3, 4, 5, 6]);
  });
});
