"""Geometry metrology for drilled trajectories.

Recovers what the bench experiments measured from cross-sections: per-arc
insertion lengths, radii of curvature, drilled diameters, and the aggregate
table with percent errors. Also the two calibrations that close the loop
between model and measurement: effective stiffness ratio from an observed
combined-bend radius, and cutter runout from an observed tunnel diameter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .phantom import tunnel_diameter

_UNBOUNDED = math.inf


class SplitError(RuntimeError):
    """Arc splitting failed; the message carries the inflection count."""


@dataclass(frozen=True)
class ArcFit:
    """Circle fit of a sampled arc inside its least-squares plane."""

    center: np.ndarray  # (3,) mm
    radius: float  # mm; inf marks a straight (unbounded-radius) fit
    arc_length: float
    rmse: float
    normal: np.ndarray  # (3,) unit plane normal

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float).reshape(3))

    @property
    def is_straight(self) -> bool:
        return math.isinf(self.radius)

    @property
    def curvature(self) -> float:
        return 0.0 if self.is_straight else 1.0 / self.radius


def resample_polyline(points, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Uniform arc-length resampling of a polyline.

    Returns (points (M, 3), arc lengths (M,)); the endpoints are preserved.
    """
    if step <= 0.0:
        raise ValueError("step must be > 0")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        return pts.copy(), np.zeros(len(pts))
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-12])
    pts = pts[keep]
    if len(pts) < 2:
        return pts.copy(), np.zeros(len(pts))
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    total = s[-1]
    n = max(2, int(round(total / step)) + 1)
    grid = np.linspace(0.0, total, n)
    out = np.column_stack([np.interp(grid, s, pts[:, i]) for i in range(3)])
    return out, grid


def fit_plane(points) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares plane: returns (centroid, unit normal, rmse)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    normal = vt[-1]
    rmse = float(np.sqrt(np.mean((centered @ normal) ** 2)))
    return centroid, normal, rmse


def _in_plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0])
    if abs(normal @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return u, v


def _fit_circle_2d(xy: np.ndarray) -> tuple[float, float, float, float]:
    """Algebraic init then geometric refinement; returns (cx, cy, r, rmse)."""
    x, y = xy[:, 0], xy[:, 1]
    A = np.column_stack([2.0 * x, 2.0 * y, np.ones(len(x))])
    b = x * x + y * y
    (cx, cy, c), *_ = np.linalg.lstsq(A, b, rcond=None)

    def residuals(center):
        return np.hypot(x - center[0], y - center[1])

    def cost(center):
        r = residuals(center)
        return r - r.mean()

    sol = optimize.least_squares(cost, x0=[cx, cy], xtol=1e-12, ftol=1e-12, gtol=1e-12)
    r = residuals(sol.x)
    radius = float(r.mean())
    rmse = float(np.sqrt(np.mean((r - radius) ** 2)))
    return float(sol.x[0]), float(sol.x[1]), radius, rmse


def fit_circle(points) -> ArcFit:
    """Geometric circle fit of planar or 3D arc samples.

    3D input is first reduced to its least-squares plane. Collinear input
    (within tolerance) yields an unbounded-radius fit rather than an error.

    Args:
        points: (N, 2) or (N, 3) array of arc samples, N >= 3.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ValueError("points must be (N, 2) or (N, 3)")
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a circle")

    if pts.shape[1] == 2:
        pts3 = np.column_stack([pts, np.zeros(len(pts))])
    else:
        pts3 = pts
    arc_length = float(np.linalg.norm(np.diff(pts3, axis=0), axis=1).sum())

    centroid, normal, _ = fit_plane(pts3)
    u, v = _in_plane_basis(normal)
    centered = pts3 - centroid
    xy = np.column_stack([centered @ u, centered @ v])

    # Collinearity: compare the spread across the line with the spread along it.
    svals = np.linalg.svd(xy - xy.mean(axis=0), compute_uv=False)
    if svals[0] < 1e-12 or svals[1] / svals[0] < 1e-9:
        rmse = float(svals[1] / math.sqrt(len(xy)))
        return ArcFit(center=centroid, radius=_UNBOUNDED, arc_length=arc_length,
                      rmse=rmse, normal=normal)

    cx, cy, radius, rmse = _fit_circle_2d(xy)
    center3 = centroid + cx * u + cy * v
    return ArcFit(center=center3, radius=radius, arc_length=arc_length,
                  rmse=rmse, normal=normal)


@dataclass(frozen=True)
class SplitResult:
    """Two-arc decomposition of a drilled trajectory."""

    split_arc_length: float
    kind: str  # "planar" | "out-of-plane"
    first_points: np.ndarray
    second_points: np.ndarray
    first_arc_length: float
    second_arc_length: float
    first_fit: ArcFit
    second_fit: ArcFit

    @property
    def plane_angle_deg(self) -> float:
        """Angle between the two fitted bend planes, folded to [0, 90]."""
        dot = abs(float(self.first_fit.normal @ self.second_fit.normal))
        return math.degrees(math.acos(min(dot, 1.0)))


def _smooth(values: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return values
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="same")


def _signed_curvature_2d(xy: np.ndarray, s: np.ndarray) -> np.ndarray:
    dx = np.gradient(xy[:, 0], s)
    dy = np.gradient(xy[:, 1], s)
    ddx = np.gradient(dx, s)
    ddy = np.gradient(dy, s)
    speed = np.clip(np.hypot(dx, dy), 1e-12, None)
    return (dx * ddy - dy * ddx) / speed**3


def _planar_split_index(xy: np.ndarray, s: np.ndarray, window: int) -> int:
    kappa = _smooth(_signed_curvature_2d(xy, s), window)
    floor = 0.05 * np.max(np.abs(kappa))
    crossings = []
    for i in range(window, len(kappa) - window - 1):
        if kappa[i] * kappa[i + 1] >= 0.0:
            continue
        before = kappa[max(0, i - window):i + 1].mean()
        after = kappa[i + 1:i + 1 + window].mean()
        if before * after < 0.0 and min(abs(before), abs(after)) > floor:
            crossings.append(i)
    # Crossings within a window of each other are one physical inflection.
    groups = []
    for i in crossings:
        if groups and i - groups[-1][-1] <= 2 * window:
            groups[-1].append(i)
        else:
            groups.append([i])
    if len(groups) != 1:
        raise SplitError(
            f"expected exactly one inflection, found {len(groups)}"
        )
    group = groups[0]
    return group[len(group) // 2]


def _min_cost_split(n: int, cost, margin: int) -> int:
    """Coarse scan every 10th index, then refine around the winner."""
    coarse = range(margin, n - margin, 10)
    best = min(coarse, key=cost)
    lo = max(margin, best - 10)
    hi = min(n - margin, best + 11)
    return min(range(lo, hi), key=cost)


def _arc_residual2(pts: np.ndarray) -> float:
    """Mean squared distance of samples from their best planar arc.

    Sum of the out-of-plane residual and the in-plane circle residual, so a
    segment straddling two differently-oriented arcs scores badly even when
    the two planes nearly coincide.
    """
    centroid, normal, plane_rmse = fit_plane(pts)
    u, v = _in_plane_basis(normal)
    centered = pts - centroid
    xy = np.column_stack([centered @ u, centered @ v])
    svals = np.linalg.svd(xy - xy.mean(axis=0), compute_uv=False)
    if svals[0] < 1e-12 or svals[1] / svals[0] < 1e-9:
        circle_rmse = float(svals[1] / math.sqrt(len(xy)))
    else:
        circle_rmse = _fit_circle_2d(xy)[3]
    return plane_rmse * plane_rmse + circle_rmse * circle_rmse


def _two_arc_split_index(pts: np.ndarray, margin: int) -> int:
    """Split index minimizing the length-weighted two-arc residual.

    Slower than inflection detection but indifferent to curvature spikes,
    so it also covers paths whose transition is a dense wiggle (roll-in-
    place sweeps) rather than a clean sign change.
    """
    n = len(pts)

    def cost(i: int) -> float:
        return (_arc_residual2(pts[:i]) * i + _arc_residual2(pts[i:]) * (n - i)) / n

    return _min_cost_split(n, cost, margin)


def split_s_curve(path, sample_step: float = 0.1, window: int = 5,
                  junction_trim: float = 2.0, planar_tol: float = 0.05) -> SplitResult:
    """Detect the single arc-to-arc transition of a two-arc trajectory.

    The path is resampled uniformly by arc length first, so slow phases do
    not over-weight the fits. Strongly planar paths split at the sustained
    sign change of the smoothed in-plane curvature; everything else (and
    any planar path without one clean inflection) splits where a two-arc
    decomposition has minimum residual. Samples within junction_trim of the
    split are excluded from the per-segment circle fits, where the
    transition wiggle would bias them. The kind label comes from the angle
    between the fitted segment planes.

    Raises:
        SplitError: trajectory too short to hold two segments.
    """
    pts_in = getattr(path, "points", path)
    pts, s = resample_polyline(pts_in, sample_step)
    margin = max(window + 2, 3)
    if len(pts) < 2 * margin + 5:
        raise SplitError("trajectory too short to split")

    centroid, normal, whole_rmse = fit_plane(pts)
    split_idx = None
    if whole_rmse < planar_tol:
        u, v = _in_plane_basis(normal)
        xy = np.column_stack([(pts - centroid) @ u, (pts - centroid) @ v])
        try:
            split_idx = _planar_split_index(xy, s, window)
        except SplitError:
            split_idx = None
    if split_idx is None:
        split_idx = _two_arc_split_index(pts, margin)

    split_s = float(s[split_idx])
    first = pts[: split_idx + 1]
    second = pts[split_idx:]

    def trimmed(segment_pts, segment_s, keep_low: bool):
        if keep_low:
            mask = segment_s <= segment_s[-1] - junction_trim
        else:
            mask = segment_s >= segment_s[0] + junction_trim
        if mask.sum() < 5:  # fall back to the untrimmed segment
            return segment_pts
        return segment_pts[mask]

    first_fit = fit_circle(trimmed(first, s[: split_idx + 1], True))
    second_fit = fit_circle(trimmed(second, s[split_idx:], False))

    dot = abs(float(first_fit.normal @ second_fit.normal))
    angle = math.degrees(math.acos(min(dot, 1.0)))
    kind = "planar" if angle < 5.0 else "out-of-plane"

    return SplitResult(
        split_arc_length=split_s,
        kind=kind,
        first_points=first,
        second_points=second,
        first_arc_length=split_s,
        second_arc_length=float(s[-1] - split_s),
        first_fit=first_fit,
        second_fit=second_fit,
    )


@dataclass(frozen=True)
class IdealParameters:
    """Commanded targets the measurements are compared against."""

    first_arc_length: float = 40.7
    second_arc_length: float = 50.0
    second_radius: float = 50.0
    first_radius: float | None = None  # the blended section has no assumption-free ideal


@dataclass(frozen=True)
class SegmentMetrics:
    label: str
    ideal_length: float
    measured_length_mean: float
    measured_length_std: float
    length_error_pct: float
    ideal_radius: float | None
    measured_radius_mean: float
    measured_radius_std: float
    radius_error_pct: float | None
    diameter_mean: float | None
    diameter_std: float | None

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "ideal_length_mm": self.ideal_length,
            "measured_length_mm": {"mean": self.measured_length_mean,
                                   "std": self.measured_length_std},
            "length_error_pct": self.length_error_pct,
            "ideal_radius_mm": self.ideal_radius,
            "measured_radius_mm": {"mean": self.measured_radius_mean,
                                   "std": self.measured_radius_std},
            "radius_error_pct": self.radius_error_pct,
            "drilled_diameter_mm": (
                None if self.diameter_mean is None
                else {"mean": self.diameter_mean, "std": self.diameter_std}
            ),
        }


@dataclass(frozen=True)
class MetricsReport:
    segments: tuple[SegmentMetrics, SegmentMetrics]
    runs_used: int
    notes: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "runs_used": self.runs_used,
            "segments": [seg.to_json_dict() for seg in self.segments],
            "notes": list(self.notes),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    def to_text(self) -> str:
        first, second = self.segments

        def pm(mean, std):
            return f"{mean:.2f} +- {std:.2f}"

        def pct(v):
            return "N/A" if v is None else f"{v:.1f}"

        def ideal(v):
            return "N/A" if v is None else f"{v:.1f}"

        rows = [
            ("", first.label, second.label),
            ("Ideal Insertion Length (mm)",
             ideal(first.ideal_length), ideal(second.ideal_length)),
            ("Measured Insertion Length (mm)",
             pm(first.measured_length_mean, first.measured_length_std),
             pm(second.measured_length_mean, second.measured_length_std)),
            ("Insertion Length Error (%)",
             pct(first.length_error_pct), pct(second.length_error_pct)),
            ("Ideal Radius of Curvature (mm)",
             ideal(first.ideal_radius), ideal(second.ideal_radius)),
            ("Measured Radius of Curvature (mm)",
             pm(first.measured_radius_mean, first.measured_radius_std),
             pm(second.measured_radius_mean, second.measured_radius_std)),
            ("Radius of Curvature Error (%)",
             pct(first.radius_error_pct), pct(second.radius_error_pct)),
        ]
        if first.diameter_mean is not None or second.diameter_mean is not None:
            def dia(seg):
                if seg.diameter_mean is None:
                    return "N/A"
                return pm(seg.diameter_mean, seg.diameter_std)
            rows.append(("Drilled Diameter (mm)", dia(first), dia(second)))

        w0 = max(len(r[0]) for r in rows)
        w1 = max(len(r[1]) for r in rows)
        w2 = max(len(r[2]) for r in rows)
        lines = [f"{r[0]:<{w0}}  {r[1]:>{w1}}  {r[2]:>{w2}}" for r in rows]
        return "\n".join(lines) + "\n"


def _aggregate(values: list) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mean, std


def _percent_error(measured_mean: float, ideal: float | None) -> float | None:
    if ideal is None:
        return None
    return abs(measured_mean - ideal) / ideal * 100.0


def metrics_report(runs, ideal: IdealParameters | None = None,
                   sample_step: float = 0.1) -> MetricsReport:
    """Table-style aggregation over repeated runs.

    Each run's tip locus is split into its two arcs and measured; runs whose
    split fails are excluded with a note. Percent errors compare the mean of
    the measurements against the ideal, and the spread is the sample
    standard deviation.
    """
    if ideal is None:
        ideal = IdealParameters()
    runs = list(runs)
    if not runs:
        raise ValueError("metrics_report needs at least one run")

    lengths_a, lengths_b = [], []
    radii_a, radii_b = [], []
    dia_a, dia_b = [], []
    notes = []
    used = 0
    for run in runs:
        try:
            split = split_s_curve(run.tip_locus(), sample_step=sample_step)
        except (SplitError, ValueError) as exc:
            notes.append(f"run '{run.scenario}' excluded: {exc}")
            continue
        used += 1
        lengths_a.append(split.first_arc_length)
        lengths_b.append(split.second_arc_length)
        radii_a.append(split.first_fit.radius)
        radii_b.append(split.second_fit.radius)
        if run.phantom is not None:
            for seg_pts, sink in ((split.first_points, dia_a), (split.second_points, dia_b)):
                mid = len(seg_pts) // 2
                lo, hi = max(0, mid - 5), min(len(seg_pts) - 1, mid + 5)
                normal = seg_pts[hi] - seg_pts[lo]
                sink.append(tunnel_diameter(run.phantom, seg_pts[mid], normal))
    if used == 0:
        raise SplitError("all runs failed to split: " + "; ".join(notes))

    la_mean, la_std = _aggregate(lengths_a)
    lb_mean, lb_std = _aggregate(lengths_b)
    ra_mean, ra_std = _aggregate(radii_a)
    rb_mean, rb_std = _aggregate(radii_b)
    da = _aggregate(dia_a) if dia_a else (None, None)
    db = _aggregate(dia_b) if dia_b else (None, None)

    first = SegmentMetrics(
        label="inner+outer",
        ideal_length=ideal.first_arc_length,
        measured_length_mean=la_mean,
        measured_length_std=la_std,
        length_error_pct=_percent_error(la_mean, ideal.first_arc_length),
        ideal_radius=ideal.first_radius,
        measured_radius_mean=ra_mean,
        measured_radius_std=ra_std,
        radius_error_pct=_percent_error(ra_mean, ideal.first_radius),
        diameter_mean=da[0],
        diameter_std=da[1],
    )
    second = SegmentMetrics(
        label="inner",
        ideal_length=ideal.second_arc_length,
        measured_length_mean=lb_mean,
        measured_length_std=lb_std,
        length_error_pct=_percent_error(lb_mean, ideal.second_arc_length),
        ideal_radius=ideal.second_radius,
        measured_radius_mean=rb_mean,
        measured_radius_std=rb_std,
        radius_error_pct=_percent_error(rb_mean, ideal.second_radius),
        diameter_mean=db[0],
        diameter_std=db[1],
    )
    return MetricsReport(segments=(first, second), runs_used=used, notes=tuple(notes))


def calibrate_stiffness_ratio(observed_combined_radius: float,
                              precurvature_radius: float) -> float:
    """Effective stiffness ratio reproducing an observed opposed-pair radius.

    For equal pre-curvatures bent against each other the blend gives
    R_obs = R_pre * (rho + 1) / (rho - 1), inverted here for rho.
    """
    if precurvature_radius <= 0.0:
        raise ValueError("precurvature_radius must be > 0")
    if observed_combined_radius <= precurvature_radius:
        raise ValueError(
            "observed radius must exceed the pre-curvature radius: opposed "
            "tubes always straighten the bundle"
        )
    return (observed_combined_radius + precurvature_radius) / (
        observed_combined_radius - precurvature_radius
    )


def calibrate_runout(observed_diameter: float, bit_diameter: float) -> float:
    """Runout that widens a bit to the observed tunnel diameter."""
    if bit_diameter <= 0.0:
        raise ValueError("bit_diameter must be > 0")
    if observed_diameter < bit_diameter:
        raise ValueError(
            "observed diameter is below the bit diameter; runout would be negative"
        )
    return 0.5 * (observed_diameter - bit_diameter)


def run_summary(record) -> dict:
    """Flat JSON-ready summary of one run.

    Split geometry and the cross-section report are best-effort: a locus
    that does not split (aborted or faulted runs) leaves those fields None
    rather than failing the summary.
    """
    plane_angle = None
    report = None
    try:
        plane_angle = split_s_curve(record.tip_locus()).plane_angle_deg
    except (RuntimeError, ValueError):
        pass
    try:
        report = metrics_report([record]).to_json_dict()
    except (RuntimeError, ValueError):
        pass
    return {
        "scenario": record.scenario,
        "faulted": record.faulted,
        "flagged": record.flagged,
        "carved_voxels": record.carved_voxels,
        "drilling_time": record.drilling_time(),
        "plane_angle_deg": plane_angle,
        "report": report,
    }
