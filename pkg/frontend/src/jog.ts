// Joystick-to-jog policy. Deflections in [-1, 1] per axis map linearly to
// velocity targets bounded by the limits the hello advertised; releasing
// a stick sends one explicit stop; outbound messages are never emitted
// faster than the 50 Hz tick. The keyboard drives the same axes through
// the same mapping, so bindings and sticks are interchangeable.

import {
  Limits,
  Mode,
  RATE_KEYS,
  RateKey,
  Rates,
  TICK_MS,
  encodeJog,
  encodeStop,
} from "./protocol.js";

export type Deflection = Record<RateKey, number>;

export function zeroDeflection(): Deflection {
  return { outer_translation: 0, inner_translation: 0, outer_roll: 0, inner_roll: 0 };
}

function clampUnit(x: number): number {
  return Math.max(-1, Math.min(1, x));
}

/** Sum two deflections (stick plus keys), clamped back to the unit box. */
export function combineDeflections(a: Deflection, b: Deflection): Deflection {
  const out = zeroDeflection();
  for (const key of RATE_KEYS) out[key] = clampUnit(a[key] + b[key]);
  return out;
}

export function isZeroDeflection(d: Deflection): boolean {
  return RATE_KEYS.every((key) => d[key] === 0);
}

/**
 * Linear stick-to-velocity map. Full deflection on a translation reaches
 * the advertised feed limit (not the raw actuator speed cap, so a held
 * stick drills at the fastest legal feed instead of bouncing off the
 * clamp), and full deflection on a roll reaches the roll speed cap.
 * Rates are quantized to 0.001 to keep the wire tidy.
 */
export function ratesFromDeflection(d: Deflection, limits: Limits): Rates {
  const feed = Math.min(limits.feed_limit, limits.max_translation_speed);
  const scale: Record<RateKey, number> = {
    outer_translation: feed,
    inner_translation: feed,
    outer_roll: limits.max_roll_speed,
    inner_roll: limits.max_roll_speed,
  };
  const rates: Rates = {};
  for (const key of RATE_KEYS) {
    rates[key] = Math.round(clampUnit(d[key]) * scale[key] * 1000) / 1000;
  }
  return rates;
}

export interface JogUpdate {
  line: string | null; // wire line to send, if any
  notice: string | null; // local rejection to surface, if any
  needsReset: boolean; // faulted: highlight the reset affordance
}

const IDLE: JogUpdate = { line: null, notice: null, needsReset: false };

/**
 * Decides, once per input poll, what (if anything) goes on the wire.
 * Jogs flow while a deflection is held, at most one per tick period;
 * the release stop goes out immediately so it lands within one tick.
 * Deflections while scripted or faulted never reach the wire: scripted
 * runs own the joints, and a fault only accepts reset.
 */
export class JogController {
  private lastSendMs = -Infinity;
  private active = false;

  constructor(private readonly tickMs: number = TICK_MS) {}

  update(d: Deflection, mode: Mode | null, limits: Limits | null, nowMs: number): JogUpdate {
    const moving = !isZeroDeflection(d);
    if (mode === "faulted") {
      this.active = false;
      return {
        line: null,
        notice: moving ? "faulted: reset required" : null,
        needsReset: true,
      };
    }
    if (mode === "scripted") {
      this.active = false;
      return {
        line: null,
        notice: moving ? "scripted run in progress; stop it to jog" : null,
        needsReset: false,
      };
    }
    if (mode === null || limits === null) return IDLE;
    if (!moving) {
      if (!this.active) return IDLE;
      this.active = false;
      this.lastSendMs = nowMs;
      return { line: encodeStop(), notice: null, needsReset: false };
    }
    if (nowMs - this.lastSendMs < this.tickMs) return IDLE;
    this.active = true;
    this.lastSendMs = nowMs;
    return { line: encodeJog(ratesFromDeflection(d, limits)), notice: null, needsReset: false };
  }
}

// Keyboard bindings mirror the joystick axes: arrows drive the
// translations (left stick), WASD drives the rolls (right stick).
export const KEY_BINDINGS: ReadonlyArray<{ code: string; axis: RateKey; sign: 1 | -1 }> = [
  { code: "ArrowRight", axis: "outer_translation", sign: 1 },
  { code: "ArrowLeft", axis: "outer_translation", sign: -1 },
  { code: "ArrowUp", axis: "inner_translation", sign: 1 },
  { code: "ArrowDown", axis: "inner_translation", sign: -1 },
  { code: "KeyD", axis: "outer_roll", sign: 1 },
  { code: "KeyA", axis: "outer_roll", sign: -1 },
  { code: "KeyW", axis: "inner_roll", sign: 1 },
  { code: "KeyS", axis: "inner_roll", sign: -1 },
];

/** Held keys as a full deflection on the bound axes. */
export function deflectionFromKeys(pressed: ReadonlySet<string>): Deflection {
  const d = zeroDeflection();
  for (const binding of KEY_BINDINGS) {
    if (pressed.has(binding.code)) d[binding.axis] = clampUnit(d[binding.axis] + binding.sign);
  }
  return d;
}
