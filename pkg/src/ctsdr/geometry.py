"""Rigid frames and rotation helpers shared by the model and kinematics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


def rotation_about(axis, angle_rad):
    """Rotation matrix about an arbitrary axis (Rodrigues form).

    Parameters
    ----------
    axis : (3,) array_like, any nonzero length (normalized internally)
    angle_rad : rotation angle in radians

    Returns
    -------
    (3, 3) ndarray
    """
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise ValueError("rotation axis must be nonzero")
    axis = axis / norm
    c = np.cos(angle_rad)
    s = np.sin(angle_rad)
    K = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rotation_x(angle_rad):
    """Rotation about the +x axis."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([
        [1.0, 0.0, 0.0],
        [0.0, c, -s],
        [0.0, s, c],
    ])


@dataclass(frozen=True, eq=False)
class Frame:
    """A rigid pose: origin in mm plus a 3x3 orthonormal orientation.

    Orientation columns are (tangent, normal1, normal2); the tangent is the
    local advance direction. The identity frame points along +x.
    """

    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        orientation = np.asarray(self.orientation, dtype=float).reshape(3, 3)
        err = np.abs(orientation.T @ orientation - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValueError(f"orientation not orthonormal (deviation {err:.2e})")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "orientation", orientation)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (np.array_equal(self.origin, other.origin)
                and np.array_equal(self.orientation, other.orientation))

    def __hash__(self):
        return hash((self.origin.tobytes(), self.orientation.tobytes()))

    @classmethod
    def identity(cls) -> "Frame":
        return cls()

    @property
    def tangent(self) -> np.ndarray:
        return self.orientation[:, 0]

    def transform_point(self, p_local) -> np.ndarray:
        return self.origin + self.orientation @ np.asarray(p_local, dtype=float)

    def compose(self, other: "Frame") -> "Frame":
        """Frame of `other` expressed in this frame's parent coordinates."""
        return Frame(
            origin=self.transform_point(other.origin),
            orientation=self.orientation @ other.orientation,
        )

    def to_json_dict(self) -> dict:
        return {
            "origin": [float(v) for v in self.origin],
            "orientation": [[float(v) for v in row] for row in self.orientation],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Frame":
        return cls(
            origin=np.array(d["origin"], dtype=float),
            orientation=np.array(d["orientation"], dtype=float),
        )
