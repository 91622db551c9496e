"""Backbone shape and tip pose from joint values.

The model is piecewise constant curvature with torsionally rigid tubes:
wherever tubes overlap, the bundle takes the bending-stiffness-weighted
vector average of the rotated pre-curvatures. Each resulting segment is an
exact circular arc (or straight line), so frames are composed analytically
and sampling introduces no integration error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Frame, rotation_about
from .model import JointState, RobotConfig

_EPS_LENGTH = 1e-12
_EPS_CURVATURE = 1e-12


def blend_curvature(components) -> np.ndarray:
    """Stiffness-weighted planar curvature of overlapping pre-curved tubes.

    Args:
        components: iterable of (bending_stiffness, precurvature, roll_deg)
            triples, one per tube present in the overlap region.

    Returns:
        (2,) curvature vector (kappa_x, kappa_y) in 1/mm, expressed in the
        cross-section frame: x toward roll 0, y toward roll 90.
    """
    components = list(components)
    if not components:
        raise ValueError("blend_curvature needs at least one component")
    numerator = np.zeros(2)
    denominator = 0.0
    for stiffness, curvature, roll_deg in components:
        if stiffness <= 0.0:
            raise ValueError("bending stiffness must be > 0")
        theta = math.radians(roll_deg)
        numerator += stiffness * curvature * np.array([math.cos(theta), math.sin(theta)])
        denominator += stiffness
    return numerator / denominator


@dataclass(frozen=True)
class Segment:
    """One constant-curvature arc of the exposed bundle."""

    length: float
    curvature_vector: np.ndarray  # (2,) 1/mm in the frame at segment start
    members: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "curvature_vector", np.asarray(self.curvature_vector, dtype=float).reshape(2)
        )
        if self.length <= 0.0:
            raise ValueError("segment length must be > 0")

    @property
    def curvature(self) -> float:
        return float(np.hypot(*self.curvature_vector))


@dataclass(frozen=True)
class SegmentStack:
    """Ordered segments from the sheath mouth to the inner tube tip."""

    segments: tuple[Segment, ...]
    base: Frame

    @property
    def total_length(self) -> float:
        return float(sum(seg.length for seg in self.segments))


@dataclass(frozen=True)
class Centerline:
    """Sampled backbone: points with arc-length parameter and tangent."""

    points: np.ndarray  # (N, 3) mm
    arc_lengths: np.ndarray  # (N,) mm, analytic
    tangents: np.ndarray  # (N, 3) unit
    sample_step: float

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "arc_lengths", np.asarray(self.arc_lengths, dtype=float))
        object.__setattr__(self, "tangents", np.asarray(self.tangents, dtype=float).reshape(-1, 3))

    @property
    def length(self) -> float:
        return float(self.arc_lengths[-1]) if len(self.arc_lengths) else 0.0

    @property
    def polyline_length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def to_csv(self, path) -> None:
        data = np.column_stack([self.arc_lengths, self.points, self.tangents])
        np.savetxt(
            path,
            data,
            delimiter=",",
            header="s_mm,x_mm,y_mm,z_mm,tx,ty,tz",
            comments="",
            fmt="%.9g",
        )


def _curved_start(exposed_length: float, tube) -> float:
    """Station (from the mouth) where the exposed tube becomes pre-curved.

    The distal curved_fraction of the tube carries the bend, so material
    further than curved_fraction * total_length from the tip is straight.
    """
    return max(0.0, exposed_length - tube.curved_fraction * tube.total_length)


def decompose_segments(config: RobotConfig, joints: JointState) -> SegmentStack:
    """Split the exposed bundle into constant-curvature segments.

    Boundaries fall where the overlapping tube set changes (outer tube tip)
    and where a tube's straight proximal portion ends. Inside the sheath the
    bundle is held straight and contributes no segment.
    """
    outer_len = joints.outer_translation
    inner_len = joints.inner_translation
    if inner_len < -_EPS_LENGTH or outer_len < -_EPS_LENGTH:
        raise ValueError("translations must be >= 0")
    if inner_len < outer_len - 1e-9:
        raise ValueError(
            f"inner tip behind outer tip (inner {inner_len} mm < outer {outer_len} mm)"
        )
    inner_len = max(inner_len, 0.0)
    outer_len = min(max(outer_len, 0.0), inner_len)

    w_outer, w_inner = config.blend_weights()
    curved_outer = _curved_start(outer_len, config.outer_tube)
    curved_inner = _curved_start(inner_len, config.inner_tube)

    stations = {0.0, inner_len}
    for s in (outer_len, curved_outer, curved_inner):
        if 0.0 < s < inner_len:
            stations.add(s)
    stations = sorted(stations)

    segments = []
    for a, b in zip(stations[:-1], stations[1:]):
        if b - a <= _EPS_LENGTH:
            continue
        mid = 0.5 * (a + b)
        components = []
        members = []
        if mid < outer_len:
            kappa = config.outer_tube.curvature if mid >= curved_outer else 0.0
            components.append((w_outer, kappa, joints.outer_roll))
            members.append("outer")
        kappa = config.inner_tube.curvature if mid >= curved_inner else 0.0
        components.append((w_inner, kappa, joints.inner_roll))
        members.append("inner")
        segments.append(
            Segment(
                length=b - a,
                curvature_vector=blend_curvature(components),
                members=tuple(members),
            )
        )
    return SegmentStack(segments=tuple(segments), base=config.sheath.pose)


def _advance(frame: Frame, curvature_vector: np.ndarray, s: float) -> Frame:
    """Frame after arc length s along a constant-curvature segment."""
    kappa = float(np.hypot(*curvature_vector))
    if kappa < _EPS_CURVATURE:
        origin = frame.origin + frame.orientation @ np.array([s, 0.0, 0.0])
        return Frame(origin=origin, orientation=frame.orientation)
    phi = math.atan2(curvature_vector[1], curvature_vector[0])
    alpha = kappa * s
    p_local = np.array([
        math.sin(alpha) / kappa,
        (1.0 - math.cos(alpha)) / kappa * math.cos(phi),
        (1.0 - math.cos(alpha)) / kappa * math.sin(phi),
    ])
    axis = np.array([0.0, -math.sin(phi), math.cos(phi)])
    rotation = rotation_about(axis, alpha)
    return Frame(
        origin=frame.origin + frame.orientation @ p_local,
        orientation=frame.orientation @ rotation,
    )


def forward_kinematics(
    config: RobotConfig, joints: JointState, sample_step: float = 0.1
) -> tuple[Centerline, Frame]:
    """Sampled backbone and tip frame for one joint state.

    Args:
        config: validated robot configuration.
        joints: joint values; inner tip must not be behind the outer tip.
        sample_step: maximum spacing of centerline samples in mm.

    Returns:
        (centerline, tip frame). With zero insertion the centerline is the
        single sheath-mouth point and the tip frame is the mouth frame.
    """
    if sample_step <= 0.0:
        raise ValueError("sample_step must be > 0")
    stack = decompose_segments(config, joints)

    frame = stack.base
    points = [frame.origin]
    tangents = [frame.tangent]
    arc = [0.0]
    s0 = 0.0
    for seg in stack.segments:
        n = max(1, int(math.ceil(seg.length / sample_step - 1e-9)))
        local_s = seg.length * np.arange(1, n + 1) / n
        for s in local_s:
            sampled = _advance(frame, seg.curvature_vector, float(s))
            points.append(sampled.origin)
            tangents.append(sampled.tangent)
            arc.append(s0 + float(s))
        frame = _advance(frame, seg.curvature_vector, seg.length)
        s0 += seg.length

    centerline = Centerline(
        points=np.array(points),
        arc_lengths=np.array(arc),
        tangents=np.array(tangents),
        sample_step=sample_step,
    )
    return centerline, frame


def tip_frame(config: RobotConfig, joints: JointState) -> Frame:
    """Tip frame only, composed segment-by-segment with no sampling."""
    stack = decompose_segments(config, joints)
    frame = stack.base
    for seg in stack.segments:
        frame = _advance(frame, seg.curvature_vector, seg.length)
    return frame


def tip_position(config: RobotConfig, joints: JointState) -> np.ndarray:
    return tip_frame(config, joints).origin


@dataclass(frozen=True)
class JacobianResult:
    """Tip-position jacobian over the four joints.

    Columns are (outer_translation, inner_translation, outer_roll,
    inner_roll) in mm/mm and mm/deg. one_sided marks columns where a joint
    limit forced a one-sided difference.
    """

    matrix: np.ndarray  # (3, 4)
    one_sided: np.ndarray  # (4,) bool


_JOINT_FIELDS = ("outer_translation", "inner_translation", "outer_roll", "inner_roll")


def _joints_feasible(config: RobotConfig, joints: JointState) -> bool:
    limits = config.joint_limits
    lo, hi = limits.outer_translation
    if not lo <= joints.outer_translation <= hi:
        return False
    lo, hi = limits.inner_translation
    if not lo <= joints.inner_translation <= hi:
        return False
    return joints.inner_translation >= joints.outer_translation


def numeric_jacobian(
    config: RobotConfig,
    joints: JointState,
    h: tuple[float, float, float, float] = (1e-3, 1e-3, 1e-2, 1e-2),
) -> JacobianResult:
    """Finite-difference tip jacobian.

    Central differences where both perturbed states are feasible, one-sided
    (flagged) where a translation limit or the tip-ordering constraint blocks
    one side. Roll columns use degrees.
    """
    base_tip = None
    matrix = np.zeros((3, 4))
    one_sided = np.zeros(4, dtype=bool)
    for j, (field_name, step) in enumerate(zip(_JOINT_FIELDS, h)):
        if step <= 0.0:
            raise ValueError("step sizes must be > 0")
        value = getattr(joints, field_name)
        plus = replace(joints, **{field_name: value + step})
        minus = replace(joints, **{field_name: value - step})
        plus_ok = _joints_feasible(config, plus)
        minus_ok = _joints_feasible(config, minus)
        if plus_ok and minus_ok:
            column = (tip_position(config, plus) - tip_position(config, minus)) / (2.0 * step)
        elif plus_ok:
            if base_tip is None:
                base_tip = tip_position(config, joints)
            column = (tip_position(config, plus) - base_tip) / step
            one_sided[j] = True
        elif minus_ok:
            if base_tip is None:
                base_tip = tip_position(config, joints)
            column = (base_tip - tip_position(config, minus)) / step
            one_sided[j] = True
        else:
            raise ValueError(
                f"joint range around {field_name} is narrower than the step {step}"
            )
        matrix[:, j] = column
    return JacobianResult(matrix=matrix, one_sided=one_sided)
