"""Physical description of the two-tube steerable drilling robot.

Everything here is immutable value data: tube and bit dimensions, the rigid
guide sheath, joint limits, and the assembled configuration with its derived
stiffness quantities. Units are millimeters, degrees, rpm and GPa throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .geometry import Frame

# Sentinel pre-curvature radius for a straight tube (curvature 0).
STRAIGHT = math.inf


def second_moment_of_area(outer_diameter: float, inner_diameter: float) -> float:
    """Area moment of inertia of an annular cross-section, pi/64 (D^4 - d^4).

    Args:
        outer_diameter: outside diameter in mm.
        inner_diameter: inside diameter in mm (0 for a solid rod).

    Returns:
        I in mm^4.
    """
    if inner_diameter < 0.0:
        raise ValueError("inner_diameter must be >= 0")
    if outer_diameter <= inner_diameter:
        raise ValueError(
            f"outer_diameter ({outer_diameter}) must exceed inner_diameter ({inner_diameter})"
        )
    return math.pi / 64.0 * (outer_diameter**4 - inner_diameter**4)


@dataclass(frozen=True)
class TubeSpec:
    """One pre-curved superelastic tube.

    precurvature_radius is the heat-set bend radius in mm; use STRAIGHT for a
    tube with no set curve. curved_fraction is the portion of the tube,
    measured from the distal tip, that carries the pre-curve.
    """

    name: str
    outer_diameter: float
    wall_thickness: float
    total_length: float
    precurvature_radius: float
    elastic_modulus: float = 60.0  # GPa
    curved_fraction: float = 1.0

    def __post_init__(self):
        if self.wall_thickness <= 0.0:
            raise ValueError(f"tube {self.name}: wall_thickness must be > 0")
        if self.outer_diameter <= 2.0 * self.wall_thickness:
            raise ValueError(
                f"tube {self.name}: outer_diameter must exceed twice the wall thickness"
            )
        if self.precurvature_radius <= 0.0:
            raise ValueError(f"tube {self.name}: precurvature_radius must be > 0")
        if self.total_length <= 0.0:
            raise ValueError(f"tube {self.name}: total_length must be > 0")
        if not 0.0 < self.curved_fraction <= 1.0:
            raise ValueError(f"tube {self.name}: curved_fraction must be in (0, 1]")
        if self.elastic_modulus <= 0.0:
            raise ValueError(f"tube {self.name}: elastic_modulus must be > 0")

    @property
    def inner_diameter(self) -> float:
        return self.outer_diameter - 2.0 * self.wall_thickness

    @property
    def curvature(self) -> float:
        """Pre-set curvature in 1/mm; 0 for a straight tube."""
        if math.isinf(self.precurvature_radius):
            return 0.0
        return 1.0 / self.precurvature_radius

    @property
    def second_moment(self) -> float:
        return second_moment_of_area(self.outer_diameter, self.inner_diameter)

    @property
    def bending_stiffness(self) -> float:
        """EI in N mm^2 (elastic modulus converted from GPa)."""
        return self.elastic_modulus * 1e3 * self.second_moment

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "outer_diameter": self.outer_diameter,
            "wall_thickness": self.wall_thickness,
            "total_length": self.total_length,
            "precurvature_radius": (
                "straight" if math.isinf(self.precurvature_radius) else self.precurvature_radius
            ),
            "elastic_modulus": self.elastic_modulus,
            "curved_fraction": self.curved_fraction,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TubeSpec":
        radius = d["precurvature_radius"]
        if radius == "straight":
            radius = STRAIGHT
        return cls(
            name=d["name"],
            outer_diameter=float(d["outer_diameter"]),
            wall_thickness=float(d["wall_thickness"]),
            total_length=float(d["total_length"]),
            precurvature_radius=float(radius),
            elastic_modulus=float(d.get("elastic_modulus", 60.0)),
            curved_fraction=float(d.get("curved_fraction", 1.0)),
        )


@dataclass(frozen=True)
class SheathSpec:
    """The straight rigid guide tube; its mouth frame anchors the workspace."""

    inner_diameter: float
    length: float
    pose: Frame = field(default_factory=Frame.identity)

    def __post_init__(self):
        if self.inner_diameter <= 0.0:
            raise ValueError("sheath inner_diameter must be > 0")
        if self.length <= 0.0:
            raise ValueError("sheath length must be > 0")

    def to_json_dict(self) -> dict:
        return {
            "inner_diameter": self.inner_diameter,
            "length": self.length,
            "pose": self.pose.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SheathSpec":
        pose = Frame.from_json_dict(d["pose"]) if "pose" in d else Frame.identity()
        return cls(
            inner_diameter=float(d["inner_diameter"]),
            length=float(d["length"]),
            pose=pose,
        )


@dataclass(frozen=True)
class DrillBitSpec:
    """Ball-nose cutter on a flexible torque coil."""

    bit_diameter: float
    torque_coil_od: float
    shaft_od: float
    runout: float = 0.0
    min_cut_rpm: float = 200.0

    def __post_init__(self):
        if self.bit_diameter <= 0.0:
            raise ValueError("bit_diameter must be > 0")
        if self.runout < 0.0:
            raise ValueError("runout must be >= 0")
        if self.torque_coil_od <= 0.0 or self.shaft_od <= 0.0:
            raise ValueError("coil and shaft diameters must be > 0")
        if self.min_cut_rpm < 0.0:
            raise ValueError("min_cut_rpm must be >= 0")

    @property
    def effective_cut_diameter(self) -> float:
        return self.bit_diameter + 2.0 * self.runout

    @property
    def cut_radius(self) -> float:
        return 0.5 * self.effective_cut_diameter

    def to_json_dict(self) -> dict:
        return {
            "bit_diameter": self.bit_diameter,
            "runout": self.runout,
            "min_cut_rpm": self.min_cut_rpm,
            "torque_coil_od": self.torque_coil_od,
            "shaft_od": self.shaft_od,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DrillBitSpec":
        return cls(
            bit_diameter=float(d["bit_diameter"]),
            torque_coil_od=float(d["torque_coil_od"]),
            shaft_od=float(d["shaft_od"]),
            runout=float(d.get("runout", 0.0)),
            min_cut_rpm=float(d.get("min_cut_rpm", 200.0)),
        )


@dataclass(frozen=True)
class JointLimits:
    """Actuation envelope: translation ranges in mm, speeds in mm/s and deg/s."""

    outer_translation: tuple[float, float] = (0.0, 41.5)
    inner_translation: tuple[float, float] = (0.0, 100.0)
    max_translation_speed: float = 5.0
    max_roll_speed: float = 60.0

    def __post_init__(self):
        for label, (lo, hi) in (
            ("outer_translation", self.outer_translation),
            ("inner_translation", self.inner_translation),
        ):
            if lo > hi:
                raise ValueError(f"{label} limits must satisfy min <= max")
        if self.max_translation_speed <= 0.0 or self.max_roll_speed <= 0.0:
            raise ValueError("speed limits must be > 0")
        object.__setattr__(self, "outer_translation", tuple(map(float, self.outer_translation)))
        object.__setattr__(self, "inner_translation", tuple(map(float, self.inner_translation)))

    def translation_range(self, joint: str) -> tuple[float, float]:
        return getattr(self, joint)

    def to_json_dict(self) -> dict:
        return {
            "outer_translation": list(self.outer_translation),
            "inner_translation": list(self.inner_translation),
            "max_translation_speed": self.max_translation_speed,
            "max_roll_speed": self.max_roll_speed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "JointLimits":
        return cls(
            outer_translation=tuple(d.get("outer_translation", (0.0, 41.5))),
            inner_translation=tuple(d.get("inner_translation", (0.0, 100.0))),
            max_translation_speed=float(d.get("max_translation_speed", 5.0)),
            max_roll_speed=float(d.get("max_roll_speed", 60.0)),
        )


@dataclass(frozen=True)
class JointState:
    """The four actuated values plus spindle speed.

    Translations are exposed arc length beyond the sheath mouth in mm; rolls
    are in degrees. The steering angle the scenarios talk about is the
    relative roll inner_roll - outer_roll.
    """

    outer_translation: float = 0.0
    inner_translation: float = 0.0
    outer_roll: float = 0.0
    inner_roll: float = 0.0
    spindle: float = 0.0

    @property
    def relative_roll(self) -> float:
        return self.inner_roll - self.outer_roll

    def to_json_dict(self) -> dict:
        return {
            "outer_translation": self.outer_translation,
            "inner_translation": self.inner_translation,
            "outer_roll": self.outer_roll,
            "inner_roll": self.inner_roll,
            "spindle": self.spindle,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "JointState":
        return cls(
            outer_translation=float(d.get("outer_translation", 0.0)),
            inner_translation=float(d.get("inner_translation", 0.0)),
            outer_roll=float(d.get("outer_roll", 0.0)),
            inner_roll=float(d.get("inner_roll", 0.0)),
            spindle=float(d.get("spindle", 0.0)),
        )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_config; an empty violation list means valid."""

    violations: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return len(self.violations) == 0

    def __bool__(self) -> bool:
        return self.valid


@dataclass(frozen=True)
class RobotConfig:
    """The assembled robot: tubes, sheath, bit, limits and drive settings.

    stiffness_ratio_override replaces the geometry-derived outer/inner
    bending stiffness ratio when set; use it to apply a calibrated effective
    ratio without inventing fake tube dimensions.
    """

    outer_tube: TubeSpec
    inner_tube: TubeSpec
    sheath: SheathSpec
    bit: DrillBitSpec
    joint_limits: JointLimits = field(default_factory=JointLimits)
    feed_limit: float = 3.0
    feed_default: float = 1.65
    spindle_max: float = 1000.0
    stiffness_ratio_override: float | None = None

    def __post_init__(self):
        if self.feed_limit <= 0.0:
            raise ValueError("feed_limit must be > 0")
        if self.feed_default <= 0.0:
            raise ValueError("feed_default must be > 0")
        if self.spindle_max <= 0.0:
            raise ValueError("spindle_max must be > 0")
        if self.stiffness_ratio_override is not None and self.stiffness_ratio_override <= 0.0:
            raise ValueError("stiffness_ratio_override must be > 0")

    @property
    def stiffness_ratio(self) -> float:
        """Effective outer/inner bending stiffness ratio used by blending."""
        if self.stiffness_ratio_override is not None:
            return self.stiffness_ratio_override
        return self.outer_tube.bending_stiffness / self.inner_tube.bending_stiffness

    def blend_weights(self) -> tuple[float, float]:
        """(outer, inner) stiffness weights for curvature blending."""
        if self.stiffness_ratio_override is not None:
            return (self.stiffness_ratio_override, 1.0)
        return (self.outer_tube.bending_stiffness, self.inner_tube.bending_stiffness)

    def with_stiffness_ratio(self, ratio: float) -> "RobotConfig":
        return replace(self, stiffness_ratio_override=ratio)

    def to_json_dict(self) -> dict:
        d = {
            "outer_tube": self.outer_tube.to_json_dict(),
            "inner_tube": self.inner_tube.to_json_dict(),
            "sheath": self.sheath.to_json_dict(),
            "bit": self.bit.to_json_dict(),
            "joint_limits": self.joint_limits.to_json_dict(),
            "feed_limit": self.feed_limit,
            "feed_default": self.feed_default,
            "spindle_max": self.spindle_max,
        }
        if self.stiffness_ratio_override is not None:
            d["stiffness_ratio_override"] = self.stiffness_ratio_override
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "RobotConfig":
        return cls(
            outer_tube=TubeSpec.from_json_dict(d["outer_tube"]),
            inner_tube=TubeSpec.from_json_dict(d["inner_tube"]),
            sheath=SheathSpec.from_json_dict(d["sheath"]),
            bit=DrillBitSpec.from_json_dict(d["bit"]),
            joint_limits=JointLimits.from_json_dict(d.get("joint_limits", {})),
            feed_limit=float(d.get("feed_limit", 3.0)),
            feed_default=float(d.get("feed_default", 1.65)),
            spindle_max=float(d.get("spindle_max", 1000.0)),
            stiffness_ratio_override=(
                float(d["stiffness_ratio_override"])
                if d.get("stiffness_ratio_override") is not None
                else None
            ),
        )

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "RobotConfig":
        return cls.from_json_dict(json.loads(text))


def validate_config(config: RobotConfig) -> ValidationReport:
    """Check the nesting clearance chain; violations are data, not exceptions."""
    violations = []
    inner, outer = config.inner_tube, config.outer_tube
    if inner.outer_diameter >= outer.inner_diameter:
        violations.append(
            "nesting clearance: inner tube OD "
            f"{inner.outer_diameter} must be < outer tube ID {outer.inner_diameter}"
        )
    if config.bit.torque_coil_od >= inner.inner_diameter:
        violations.append(
            "coil clearance: torque coil OD "
            f"{config.bit.torque_coil_od} must be < inner tube ID {inner.inner_diameter}"
        )
    if outer.outer_diameter > config.sheath.inner_diameter:
        violations.append(
            "sheath clearance: outer tube OD "
            f"{outer.outer_diameter} must be <= sheath ID {config.sheath.inner_diameter}"
        )
    if config.bit.bit_diameter <= outer.outer_diameter:
        violations.append(
            "bit smaller than outer tube: bit diameter "
            f"{config.bit.bit_diameter} must exceed outer tube OD {outer.outer_diameter}"
        )
    return ValidationReport(violations=tuple(violations))


def default_config() -> RobotConfig:
    """The reference hardware: 3.61/2.6 mm tube pair bent to 50 mm radius,
    6 mm ball-nose bit on a 1.63 mm coil, 41.5 mm outer carriage travel."""
    return RobotConfig(
        outer_tube=TubeSpec(
            name="outer",
            outer_diameter=3.61,
            wall_thickness=0.25,
            total_length=110.0,
            precurvature_radius=50.0,
        ),
        inner_tube=TubeSpec(
            name="inner",
            outer_diameter=2.6,
            wall_thickness=0.2,
            total_length=290.0,
            precurvature_radius=50.0,
        ),
        sheath=SheathSpec(inner_diameter=3.7, length=150.0),
        bit=DrillBitSpec(
            bit_diameter=6.0,
            torque_coil_od=1.63,
            shaft_od=0.95,
            runout=0.7,
            min_cut_rpm=200.0,
        ),
        joint_limits=JointLimits(
            outer_translation=(0.0, 41.5),
            inner_translation=(0.0, 100.0),
            max_translation_speed=5.0,
            max_roll_speed=60.0,
        ),
        feed_limit=3.0,
        feed_default=1.65,
        spindle_max=1000.0,
    )


def load_config(path) -> RobotConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return RobotConfig.from_json(fh.read())


def save_config(config: RobotConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config.to_json() + "\n")
