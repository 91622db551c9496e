// Rendering helpers for the two orthogonal projection views, the tip
// trajectory overlay, and the metrics readout. The world-to-pixel math
// is pure so the tests can hold it to the documented raster layout.

import { MetricsMsg, ProjectionAxis, SegmentStats, Vec3 } from "./protocol.js";
import { ProjectionImage } from "./state.js";

export interface PhantomFrame {
  voxelMm: number;
  originMm: Vec3;
}

// The bundled service drills a 100 x 80 x 60 mm block at 0.5 mm voxels
// with its corner at (0, -40, -30) mm. The overlay assumes that frame
// unless the page URL overrides it (?voxel=&ox=&oy=&oz=).
export const DEFAULT_FRAME: PhantomFrame = { voxelMm: 0.5, originMm: [0, -40, -30] };

export function frameFromQuery(search: string): PhantomFrame {
  const params = new URLSearchParams(search);
  const num = (name: string, fallback: number): number => {
    const raw = params.get(name);
    if (raw === null) return fallback;
    const value = Number(raw);
    return Number.isFinite(value) ? value : fallback;
  };
  return {
    voxelMm: num("voxel", DEFAULT_FRAME.voxelMm),
    originMm: [
      num("ox", DEFAULT_FRAME.originMm[0]),
      num("oy", DEFAULT_FRAME.originMm[1]),
      num("oz", DEFAULT_FRAME.originMm[2]),
    ],
  };
}

/**
 * Map a tip position in mm onto projection pixel coordinates (px, py).
 * Rasters put grid x on rows; the top view (axis z) puts y on columns
 * and the side view (axis y) puts z on columns, so canvas x is the
 * column index and canvas y the row index.
 */
export function worldToPixel(tip: Vec3, axis: ProjectionAxis, frame: PhantomFrame): [number, number] {
  const row = (tip[0] - frame.originMm[0]) / frame.voxelMm;
  const col =
    axis === "z"
      ? (tip[1] - frame.originMm[1]) / frame.voxelMm
      : (tip[2] - frame.originMm[2]) / frame.voxelMm;
  return [col, row];
}

/** Grayscale projection (air fraction: tunnels bright) to canvas pixels. */
export function drawProjection(canvas: HTMLCanvasElement, image: ProjectionImage | null): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  if (image === null) {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    return;
  }
  if (canvas.width !== image.width || canvas.height !== image.height) {
    canvas.width = image.width;
    canvas.height = image.height;
  }
  const rgba = new Uint8ClampedArray(image.pixels.length * 4);
  for (let i = 0; i < image.pixels.length; i++) {
    const v = image.pixels[i];
    rgba[i * 4] = v;
    rgba[i * 4 + 1] = v;
    rgba[i * 4 + 2] = v;
    rgba[i * 4 + 3] = 255;
  }
  ctx.putImageData(new ImageData(rgba, image.width, image.height), 0, 0);
}

/** Polyline of received tips over one projection view. */
export function drawTrajectory(
  canvas: HTMLCanvasElement,
  trajectory: ReadonlyArray<Vec3>,
  axis: ProjectionAxis,
  frame: PhantomFrame,
): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (trajectory.length === 0) return;
  ctx.strokeStyle = "#ff5a8c";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  for (let i = 0; i < trajectory.length; i++) {
    const [px, py] = worldToPixel(trajectory[i], axis, frame);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  }
  ctx.stroke();
  const [px, py] = worldToPixel(trajectory[trajectory.length - 1], axis, frame);
  ctx.fillStyle = "#ffd166";
  ctx.beginPath();
  ctx.arc(px, py, 2.5, 0, 2 * Math.PI);
  ctx.fill();
}

function fmtStat(stat: SegmentStats | null, unit: string): string {
  if (stat === null) return "n/a";
  const spread = stat.std > 0 ? ` +/- ${stat.std.toFixed(2)}` : "";
  return `${stat.mean.toFixed(2)}${spread} ${unit}`;
}

function fmtIdeal(ideal: number | null, errorPct: number | null): string {
  if (ideal === null) return "";
  const err = errorPct === null ? "" : `, ${errorPct.toFixed(2)}% off`;
  return ` (ideal ${ideal}${err})`;
}

/** Metrics message as display rows for the readout panel. */
export function metricsLines(m: MetricsMsg): string[] {
  const status = m.faulted ? "FAULTED" : m.flagged ? "flagged" : "clean";
  const lines = [
    `${m.scenario}: ${status}`,
    `drilling time ${m.drilling_time === null ? "n/a" : m.drilling_time.toFixed(2) + " s"}`,
    `carved voxels ${m.carved_voxels}`,
  ];
  if (m.plane_angle_deg !== null) {
    lines.push(`bend plane angle ${m.plane_angle_deg.toFixed(1)} deg`);
  }
  if (m.report !== null) {
    for (const seg of m.report.segments) {
      lines.push(`[${seg.label}]`);
      lines.push(
        `  length ${fmtStat(seg.measured_length_mm, "mm")}` +
          fmtIdeal(seg.ideal_length_mm, seg.length_error_pct),
      );
      lines.push(
        `  radius ${fmtStat(seg.measured_radius_mm, "mm")}` +
          fmtIdeal(seg.ideal_radius_mm, seg.radius_error_pct),
      );
      if (seg.drilled_diameter_mm !== null) {
        lines.push(`  diameter ${fmtStat(seg.drilled_diameter_mm, "mm")}`);
      }
    }
    for (const note of m.report.notes) lines.push(`note: ${note}`);
  }
  return lines;
}
