"""Inverse design: joint schedules that put the tip on a target.

The search runs over (outer translation, inner translation, relative roll)
only: rolling both tubes together rotates the whole shape rigidly about the
sheath axis, so the best outer roll for any candidate is found analytically
by aligning azimuths around that axis. A coarse deterministic grid is
followed by shrinking-step coordinate descent; ties break toward shorter
channels and smaller rolls.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import rotation_x
from .kinematics import tip_position
from .model import JointState, RobotConfig
from .simulator import Command, Phase, ScenarioScript


class UnreachableTargetError(RuntimeError):
    """No candidate came close enough; carries the best attempt."""

    def __init__(self, message: str, best: "PlanResult"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class PlanRequest:
    """Target tip position with channel-length and roll constraints."""

    target: np.ndarray  # (3,) mm, world coordinates
    total_length: float = 90.0
    allowed_relative_rolls: tuple[float, ...] | None = (0.0, 90.0, 180.0)
    radius_bounds: tuple[float, float] | None = None  # optional shared pre-curve search
    weight_tip: float = 1.0
    weight_length: float = 1.0
    feasibility_threshold: float = 5.0  # mm of tip error

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).reshape(3))
        if self.allowed_relative_rolls is not None:
            object.__setattr__(
                self, "allowed_relative_rolls",
                tuple(float(r) for r in self.allowed_relative_rolls),
            )
        if self.total_length <= 0.0:
            raise ValueError("total_length must be > 0")
        if self.weight_tip < 0.0 or self.weight_length < 0.0:
            raise ValueError("weights must be >= 0")
        if self.radius_bounds is not None:
            lo, hi = self.radius_bounds
            if not 0.0 < lo <= hi:
                raise ValueError("radius_bounds must satisfy 0 < min <= max")
            object.__setattr__(self, "radius_bounds", (float(lo), float(hi)))

    def to_json_dict(self) -> dict:
        return {
            "target": [float(v) for v in self.target],
            "total_length": self.total_length,
            "allowed_relative_rolls": (
                None if self.allowed_relative_rolls is None
                else list(self.allowed_relative_rolls)
            ),
            "radius_bounds": None if self.radius_bounds is None else list(self.radius_bounds),
            "weight_tip": self.weight_tip,
            "weight_length": self.weight_length,
            "feasibility_threshold": self.feasibility_threshold,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PlanRequest":
        rolls = d.get("allowed_relative_rolls", (0.0, 90.0, 180.0))
        bounds = d.get("radius_bounds")
        return cls(
            target=np.asarray(d["target"], dtype=float),
            total_length=float(d.get("total_length", 90.0)),
            allowed_relative_rolls=None if rolls is None else tuple(rolls),
            radius_bounds=None if bounds is None else (float(bounds[0]), float(bounds[1])),
            weight_tip=float(d.get("weight_tip", 1.0)),
            weight_length=float(d.get("weight_length", 1.0)),
            feasibility_threshold=float(d.get("feasibility_threshold", 5.0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "PlanRequest":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class PlanCandidate:
    """One joint schedule: arc lengths plus rolls (and optional pre-curve)."""

    outer_translation: float
    inner_translation: float
    outer_roll: float
    relative_roll: float
    precurvature_radius: float | None = None

    @property
    def inner_roll(self) -> float:
        return self.outer_roll + self.relative_roll

    @property
    def total_length(self) -> float:
        return self.inner_translation

    def joints(self) -> JointState:
        return JointState(
            outer_translation=self.outer_translation,
            inner_translation=self.inner_translation,
            outer_roll=self.outer_roll,
            inner_roll=self.inner_roll,
        )

    def apply_config(self, config: RobotConfig) -> RobotConfig:
        """Config with this candidate's pre-curvature, when one was searched."""
        if self.precurvature_radius is None:
            return config
        return replace(
            config,
            outer_tube=replace(config.outer_tube, precurvature_radius=self.precurvature_radius),
            inner_tube=replace(config.inner_tube, precurvature_radius=self.precurvature_radius),
        )

    def to_json_dict(self) -> dict:
        d = {
            "outer_translation": self.outer_translation,
            "inner_translation": self.inner_translation,
            "outer_roll": self.outer_roll,
            "relative_roll": self.relative_roll,
        }
        if self.precurvature_radius is not None:
            d["precurvature_radius"] = self.precurvature_radius
        return d


@dataclass(frozen=True)
class RankedCandidate:
    candidate: PlanCandidate
    cost: float
    tip_error: float

    def to_json_dict(self) -> dict:
        return {
            "candidate": self.candidate.to_json_dict(),
            "cost": self.cost,
            "tip_error": self.tip_error,
        }


@dataclass(frozen=True)
class PlanResult:
    best: PlanCandidate
    predicted_tip: np.ndarray  # (3,) world
    tip_error: float
    length_error: float
    cost: float
    ranked: tuple[RankedCandidate, ...]

    def to_json_dict(self) -> dict:
        return {
            "best": self.best.to_json_dict(),
            "predicted_tip": [float(v) for v in self.predicted_tip],
            "tip_error": self.tip_error,
            "length_error": self.length_error,
            "cost": self.cost,
            "ranked": [r.to_json_dict() for r in self.ranked],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    def to_scenario_script(self, config: RobotConfig, name: str = "plan") -> ScenarioScript:
        """Opposed-style script executing the winning schedule: rolls set from
        the start, co-advance to the outer arc, then inner advance."""
        feed = config.feed_default
        cand = self.best
        phases = []
        if cand.outer_translation > 1e-9:
            phases.append(Phase("co-advance", Command(
                outer_rate=feed, inner_rate=feed, spindle=config.spindle_max,
                until=("outer_translation", cand.outer_translation))))
            spindle = None
        else:
            spindle = config.spindle_max
        if cand.inner_translation > cand.outer_translation + 1e-9:
            phases.append(Phase("inner-advance", Command(
                inner_rate=feed, spindle=spindle,
                until=("inner_translation", cand.inner_translation))))
        return ScenarioScript(
            name=name,
            description="planned two-arc schedule",
            initial=JointState(outer_roll=cand.outer_roll, inner_roll=cand.inner_roll),
            phases=tuple(phases),
        )


def plan_cost(candidate: PlanCandidate, request: PlanRequest, config: RobotConfig) -> float:
    """w_tip * |tip - target|^2 + w_length * (channel length - target length)^2."""
    cfg = candidate.apply_config(config)
    tip = tip_position(cfg, candidate.joints())
    tip_err2 = float(np.sum((tip - request.target) ** 2))
    len_err = candidate.total_length - request.total_length
    return request.weight_tip * tip_err2 + request.weight_length * len_err * len_err


def _arc_offsets(kappa, phi, length):
    """Batched endpoint offset and rotation of constant-curvature arcs.

    All arguments broadcast; returns (p (N, 3), R (N, 3, 3)) in the frame at
    the arc start.
    """
    kappa = np.asarray(kappa, dtype=float)
    phi = np.asarray(phi, dtype=float)
    length = np.asarray(length, dtype=float)
    kappa, phi, length = np.broadcast_arrays(kappa, phi, length)
    n = kappa.shape

    bent = kappa > 1e-12
    safe_k = np.where(bent, kappa, 1.0)
    alpha = kappa * length
    sin_a, cos_a = np.sin(alpha), np.cos(alpha)

    p = np.empty(n + (3,))
    p[..., 0] = np.where(bent, sin_a / safe_k, length)
    chord = np.where(bent, (1.0 - cos_a) / safe_k, 0.0)
    p[..., 1] = chord * np.cos(phi)
    p[..., 2] = chord * np.sin(phi)

    # Rotation about axis (0, -sin phi, cos phi) by alpha (identity if straight).
    ax = np.zeros(n)
    ay = -np.sin(phi)
    az = np.cos(phi)
    a = np.stack([ax, ay, az], axis=-1)
    s = np.where(bent, sin_a, 0.0)
    c = np.where(bent, cos_a, 1.0)
    eye = np.broadcast_to(np.eye(3), n + (3, 3))
    K = np.zeros(n + (3, 3))
    K[..., 0, 1] = -az
    K[..., 0, 2] = ay
    K[..., 1, 0] = az
    K[..., 1, 2] = -ax
    K[..., 2, 0] = -ay
    K[..., 2, 1] = ax
    aa = a[..., :, None] * a[..., None, :]
    R = c[..., None, None] * eye + s[..., None, None] * K + (1.0 - c[..., None, None]) * aa
    return p, R


def _tips_zero_outer_roll(config: RobotConfig, outer_len, inner_len, rel_roll_deg,
                          curvature=None):
    """Batched tip positions in sheath-local coordinates with outer roll 0.

    Mirrors forward kinematics for the two-segment case; cross-checked
    against the scalar path in the tests.
    """
    wo, wi = config.blend_weights()
    if curvature is None:
        ko = config.outer_tube.curvature
        ki = config.inner_tube.curvature
    else:
        ko = ki = np.asarray(curvature, dtype=float)
    th = np.radians(rel_roll_deg)
    kx = (wo * ko + wi * ki * np.cos(th)) / (wo + wi)
    ky = (wi * ki * np.sin(th)) / (wo + wi)
    k_blend = np.hypot(kx, ky)
    phi_blend = np.arctan2(ky, kx)

    p_a, r_a = _arc_offsets(k_blend, phi_blend, outer_len)
    p_b, _ = _arc_offsets(ki, th, np.asarray(inner_len) - np.asarray(outer_len))
    return p_a + np.einsum("...ij,...j->...i", r_a, p_b)


def _local_target(config: RobotConfig, target_world: np.ndarray) -> np.ndarray:
    pose = config.sheath.pose
    return pose.orientation.T @ (np.asarray(target_world, dtype=float) - pose.origin)


def _fold_deg(angle: float) -> float:
    return (angle + 180.0) % 360.0 - 180.0


def _aligned_roll_and_error(tips_local: np.ndarray, target_local: np.ndarray):
    """Best outer roll (deg) per candidate and the tip error it leaves.

    Rolling both tubes by delta rotates the tip rigidly about the sheath
    axis, so the optimal roll matches azimuths around x and the residual
    lives in (axial, radial) coordinates.
    """
    vx = tips_local[..., 0]
    v_rad = np.hypot(tips_local[..., 1], tips_local[..., 2])
    v_az = np.arctan2(tips_local[..., 2], tips_local[..., 1])
    tx = target_local[0]
    t_rad = math.hypot(target_local[1], target_local[2])
    t_az = math.atan2(target_local[2], target_local[1])

    roll = np.where(v_rad > 1e-9, np.degrees(t_az - v_az), 0.0)
    err = np.sqrt((vx - tx) ** 2 + (v_rad - t_rad) ** 2)
    return roll, err


def _evaluate_batch(config: RobotConfig, request: PlanRequest, outer_len,
                    inner_len, rel_roll, radius):
    """Cost, aligned outer roll, and tip error for a batch of candidates."""
    outer_len = np.asarray(outer_len, dtype=float)
    inner_len = np.asarray(inner_len, dtype=float)
    tip0 = _tips_zero_outer_roll(
        config, outer_len, inner_len, np.asarray(rel_roll, dtype=float),
        curvature=None if radius is None else 1.0 / np.asarray(radius, dtype=float),
    )
    target_local = _local_target(config, request.target)
    roll, err = _aligned_roll_and_error(tip0, target_local)
    len_err = inner_len - request.total_length
    cost = request.weight_tip * err**2 + request.weight_length * len_err**2
    return cost, roll, err


def _evaluate(config: RobotConfig, request: PlanRequest, outer_len: float,
              inner_len: float, rel_roll: float, radius: float | None):
    cost, roll, err = _evaluate_batch(config, request, outer_len, inner_len,
                                      rel_roll, radius)
    return float(cost), float(roll), float(err)


def plan_s_shape(request: PlanRequest, config: RobotConfig,
                 grid_translation: float = 2.0, grid_roll: float = 15.0,
                 top_k: int = 5) -> PlanResult:
    """Grid search plus shrinking-step coordinate descent.

    Raises:
        UnreachableTargetError: best refined tip error exceeds the request's
            feasibility threshold; the error carries the best result.
    """
    limits = config.joint_limits
    lo_min, lo_max = limits.outer_translation
    li_min, li_max = limits.inner_translation
    lo_grid = np.arange(lo_min, lo_max + 1e-9, grid_translation)
    li_grid = np.arange(li_min, li_max + 1e-9, grid_translation)
    if request.allowed_relative_rolls is not None:
        rel_grid = np.asarray(request.allowed_relative_rolls, dtype=float)
        rel_continuous = False
    else:
        rel_grid = np.arange(0.0, 360.0, grid_roll)
        rel_continuous = True
    if request.radius_bounds is not None:
        r_lo, r_hi = request.radius_bounds
        radius_grid = np.linspace(r_lo, r_hi, 5)
    else:
        radius_grid = np.array([np.nan])  # nan marks "use the config tubes"

    lo, li, rel, rad = np.meshgrid(lo_grid, li_grid, rel_grid, radius_grid, indexing="ij")
    lo, li, rel, rad = (a.ravel() for a in (lo, li, rel, rad))
    feasible = li >= lo - 1e-12
    lo, li, rel, rad = lo[feasible], li[feasible], rel[feasible], rad[feasible]

    grid_curv = None if request.radius_bounds is None else 1.0 / rad
    tips0 = _tips_zero_outer_roll(config, lo, li, rel, curvature=grid_curv)
    target_local = _local_target(config, request.target)
    roll, err = _aligned_roll_and_error(tips0, target_local)
    len_err = li - request.total_length
    cost = request.weight_tip * err**2 + request.weight_length * len_err**2

    # Deterministic ranking with the tie-break (cost, length, |relative roll|).
    fold = np.abs((rel + 180.0) % 360.0 - 180.0)
    order = np.lexsort((fold, li, cost))

    def candidate_at(i: int) -> PlanCandidate:
        return PlanCandidate(
            outer_translation=float(lo[i]),
            inner_translation=float(li[i]),
            outer_roll=float(_fold_deg(roll[i])),
            relative_roll=float(rel[i]),
            precurvature_radius=None if request.radius_bounds is None else float(rad[i]),
        )

    best_idx = int(order[0])
    grid_cost = float(cost[best_idx])

    # Shrinking-step coordinate descent from the grid winner; the outer roll
    # stays analytic throughout.
    cur_lo = float(lo[best_idx])
    cur_li = float(li[best_idx])
    cur_rel = float(rel[best_idx])
    cur_rad = None if request.radius_bounds is None else float(rad[best_idx])

    cur_cost, cur_roll, cur_err = _evaluate(config, request, cur_lo, cur_li,
                                            cur_rel, cur_rad)
    step_t = grid_translation / 2.0
    step_r = grid_roll / 2.0
    step_rad = None if cur_rad is None else (request.radius_bounds[1] -
                                             request.radius_bounds[0]) / 8.0
    while step_t >= 1e-3:
        improved = False
        moves = [
            (cur_lo + step_t, cur_li, cur_rel, cur_rad),
            (cur_lo - step_t, cur_li, cur_rel, cur_rad),
            (cur_lo, cur_li + step_t, cur_rel, cur_rad),
            (cur_lo, cur_li - step_t, cur_rel, cur_rad),
        ]
        if rel_continuous:
            moves += [
                (cur_lo, cur_li, cur_rel + step_r, cur_rad),
                (cur_lo, cur_li, cur_rel - step_r, cur_rad),
            ]
        if cur_rad is not None and step_rad > 0:
            moves += [
                (cur_lo, cur_li, cur_rel, cur_rad + step_rad),
                (cur_lo, cur_li, cur_rel, cur_rad - step_rad),
            ]
        probes = []
        for plo, pli, prel, prad in moves:
            plo = min(max(plo, lo_min), lo_max)
            pli = min(max(pli, li_min), li_max)
            if pli < plo:
                continue
            if prad is not None:
                prad = min(max(prad, request.radius_bounds[0]), request.radius_bounds[1])
            probes.append((plo, pli, prel, prad))
        if probes:
            # One vectorized sweep; the accept rule scans in move order against
            # the running best exactly like a scalar loop would.
            costs, rolls, errs = _evaluate_batch(
                config, request,
                np.array([m[0] for m in probes]),
                np.array([m[1] for m in probes]),
                np.array([m[2] for m in probes]),
                None if cur_rad is None else np.array([m[3] for m in probes]),
            )
            for k, (plo, pli, prel, prad) in enumerate(probes):
                if costs[k] < cur_cost - 1e-15:
                    cur_lo, cur_li, cur_rel, cur_rad = plo, pli, prel, prad
                    cur_cost = float(costs[k])
                    cur_roll = float(rolls[k])
                    cur_err = float(errs[k])
                    improved = True
        if not improved:
            step_t *= 0.5
            step_r *= 0.5
            if step_rad is not None:
                step_rad *= 0.5

    best = PlanCandidate(
        outer_translation=cur_lo,
        inner_translation=cur_li,
        outer_roll=_fold_deg(cur_roll),
        relative_roll=cur_rel,
        precurvature_radius=cur_rad,
    )
    assert cur_cost <= grid_cost + 1e-12
    predicted_local = _tips_zero_outer_roll(
        config, np.asarray(cur_lo), np.asarray(cur_li), np.asarray(cur_rel),
        curvature=None if cur_rad is None else np.asarray(1.0 / cur_rad),
    )
    pose = config.sheath.pose
    predicted_world = pose.transform_point(
        rotation_x(math.radians(best.outer_roll)) @ predicted_local
    )

    ranked = [RankedCandidate(candidate=best, cost=cur_cost, tip_error=cur_err)]
    for i in order[1:top_k]:
        i = int(i)
        ranked.append(RankedCandidate(
            candidate=candidate_at(i), cost=float(cost[i]), tip_error=float(err[i]),
        ))

    result = PlanResult(
        best=best,
        predicted_tip=predicted_world,
        tip_error=cur_err,
        length_error=cur_li - request.total_length,
        cost=cur_cost,
        ranked=tuple(ranked),
    )
    if cur_err > request.feasibility_threshold:
        raise UnreachableTargetError(
            f"no candidate within {request.feasibility_threshold} mm of the target "
            f"(best tip error {cur_err:.3f} mm)",
            best=result,
        )
    return result
