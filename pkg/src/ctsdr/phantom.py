"""Voxel bone phantom: occupancy grid, swept-sphere carving, measurement.

The grid stands in for a machinable foam block. Carving clears voxels whose
centers fall within the cutter radius of the swept tip path; measurement
routines recover tunnel diameter and centerline from the carved grid alone,
the same way the physical cross-sections were measured.
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy import ndimage


class VoxelBudgetError(ValueError):
    """Requested grid exceeds the configured voxel budget."""


class NoTunnelError(RuntimeError):
    """A measurement plane or grid contains no carved empty region."""


DEFAULT_VOXEL_BUDGET = 200_000_000


class VoxelPhantom:
    """Axis-aligned occupancy grid, 1 = material. Mutable by carving only."""

    def __init__(self, dims, voxel_size, origin=(0.0, 0.0, 0.0), material="PCF5",
                 occupancy=None):
        self.dims = tuple(int(n) for n in dims)
        if any(n <= 0 for n in self.dims):
            raise ValueError("dims must be positive")
        if voxel_size <= 0.0:
            raise ValueError("voxel_size must be > 0")
        self.voxel_size = float(voxel_size)
        self.origin = np.asarray(origin, dtype=float).reshape(3)
        self.material = material
        if occupancy is None:
            occupancy = np.ones(self.dims, dtype=bool)
        else:
            occupancy = np.asarray(occupancy, dtype=bool)
            if occupancy.shape != self.dims:
                raise ValueError("occupancy shape does not match dims")
        self.occupancy = occupancy

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.dims))

    @property
    def size(self) -> np.ndarray:
        """Physical extent in mm per axis."""
        return np.array(self.dims) * self.voxel_size

    def occupied_count(self) -> int:
        return int(self.occupancy.sum())

    def reset(self) -> None:
        """Refill the block (phantoms are created fully occupied)."""
        self.occupancy[:] = True

    def clone(self) -> "VoxelPhantom":
        return VoxelPhantom(
            dims=self.dims,
            voxel_size=self.voxel_size,
            origin=self.origin.copy(),
            material=self.material,
            occupancy=self.occupancy.copy(),
        )

    def axis_centers(self, axis: int) -> np.ndarray:
        """World coordinates of voxel centers along one axis."""
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.voxel_size

    def world_to_index(self, point) -> tuple[int, int, int] | None:
        """Voxel index containing a world point, or None if outside."""
        rel = (np.asarray(point, dtype=float) - self.origin) / self.voxel_size
        idx = np.floor(rel).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.dims)):
            return None
        return tuple(int(v) for v in idx)

    def save_snapshot(self, path_prefix) -> None:
        """Raw bitset (packed occupancy) plus a JSON sidecar."""
        path_prefix = str(path_prefix)
        bits = np.packbits(self.occupancy.reshape(-1))
        with open(path_prefix + ".bits", "wb") as fh:
            fh.write(bits.tobytes())
        sidecar = {
            "dims": list(self.dims),
            "voxel_size": self.voxel_size,
            "origin": [float(v) for v in self.origin],
            "material": self.material,
        }
        with open(path_prefix + ".json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load_snapshot(cls, path_prefix) -> "VoxelPhantom":
        path_prefix = str(path_prefix)
        with open(path_prefix + ".json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        dims = tuple(sidecar["dims"])
        count = int(np.prod(dims))
        with open(path_prefix + ".bits", "rb") as fh:
            bits = np.frombuffer(fh.read(), dtype=np.uint8)
        occupancy = np.unpackbits(bits, count=count).astype(bool).reshape(dims)
        return cls(
            dims=dims,
            voxel_size=sidecar["voxel_size"],
            origin=sidecar["origin"],
            material=sidecar.get("material", "PCF5"),
            occupancy=occupancy,
        )


def create_phantom(size, voxel_size: float, origin=(0.0, 0.0, 0.0),
                   voxel_budget: int = DEFAULT_VOXEL_BUDGET) -> VoxelPhantom:
    """Fully occupied block of the given physical size.

    Args:
        size: (sx, sy, sz) in mm.
        voxel_size: edge length of one cubic voxel in mm.
        origin: world position of the grid corner.
        voxel_budget: allocation cap; exceeded budgets raise VoxelBudgetError.
    """
    if voxel_size <= 0.0:
        raise ValueError("voxel_size must be > 0")
    size = np.asarray(size, dtype=float).reshape(3)
    if np.any(size <= 0.0):
        raise ValueError("size must be positive")
    dims = tuple(int(math.ceil(s / voxel_size - 1e-9)) for s in size)
    total = dims[0] * dims[1] * dims[2]
    if total > voxel_budget:
        raise VoxelBudgetError(
            f"grid of {dims} = {total} voxels exceeds the budget of {voxel_budget}"
        )
    return VoxelPhantom(dims=dims, voxel_size=voxel_size, origin=origin)


def _path_points(path) -> np.ndarray:
    points = getattr(path, "points", path)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("path must contain at least one point")
    return points


def _sweep_boxes(phantom: VoxelPhantom, points: np.ndarray, cut_radius: float):
    """Yield (occupancy view, in-radius mask) per polyline segment.

    Work is confined to an expanded bounding box per segment, so short
    sweeps touch only a few thousand voxels.
    """
    occ = phantom.occupancy
    dims = np.array(phantom.dims)
    vs = phantom.voxel_size
    origin = phantom.origin
    r2 = cut_radius * cut_radius

    segments = [(points[0], points[0])] if len(points) == 1 else list(
        zip(points[:-1], points[1:])
    )
    for p0, p1 in segments:
        lo = np.minimum(p0, p1) - cut_radius
        hi = np.maximum(p0, p1) + cut_radius
        i0 = np.maximum(np.floor((lo - origin) / vs - 0.5).astype(int), 0)
        i1 = np.minimum(np.ceil((hi - origin) / vs - 0.5).astype(int) + 1, dims)
        if np.any(i0 >= i1):
            continue
        xs = origin[0] + (np.arange(i0[0], i1[0]) + 0.5) * vs
        ys = origin[1] + (np.arange(i0[1], i1[1]) + 0.5) * vs
        zs = origin[2] + (np.arange(i0[2], i1[2]) + 0.5) * vs
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")

        d = p1 - p0
        dd = float(d @ d)
        if dd < 1e-18:
            ex, ey, ez = gx - p0[0], gy - p0[1], gz - p0[2]
        else:
            t = ((gx - p0[0]) * d[0] + (gy - p0[1]) * d[1] + (gz - p0[2]) * d[2]) / dd
            np.clip(t, 0.0, 1.0, out=t)
            ex = gx - (p0[0] + t * d[0])
            ey = gy - (p0[1] + t * d[1])
            ez = gz - (p0[2] + t * d[2])
        inside = ex * ex + ey * ey + ez * ez <= r2
        view = occ[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]]
        yield view, inside


def carve_swept_sphere(phantom: VoxelPhantom, path, cut_radius: float) -> int:
    """Clear every voxel whose center is within cut_radius of the path.

    The path is treated as a polyline (a single point sweeps a sphere).

    Returns:
        Number of voxels newly cleared (0 when repeating a carve).
    """
    if cut_radius <= 0.0:
        raise ValueError("cut_radius must be > 0")
    points = _path_points(path)
    carved = 0
    for view, inside in _sweep_boxes(phantom, points, cut_radius):
        hit = inside & view
        carved += int(hit.sum())
        view[hit] = False
    return carved


def swept_occupied(phantom: VoxelPhantom, path, cut_radius: float) -> int:
    """Count occupied voxels the sweep would clear, without mutating the grid."""
    if cut_radius <= 0.0:
        raise ValueError("cut_radius must be > 0")
    points = _path_points(path)
    hits = 0
    for view, inside in _sweep_boxes(phantom, points, cut_radius):
        hits += int((inside & view).sum())
    return hits


def _plane_basis(normal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.asarray(normal, dtype=float).reshape(3)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise ValueError("plane normal must be nonzero")
    n = n / norm
    helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(n, helper)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return n, u, v


def tunnel_diameter(phantom: VoxelPhantom, plane_point, plane_normal,
                    search_radius: float = 10.0) -> float:
    """Largest inscribed circle of the carved region in a cross-section.

    The plane is rasterized at voxel resolution, the empty connected
    component nearest the plane point is isolated, and its inscribed-circle
    diameter is read off a Euclidean distance transform.
    """
    plane_point = np.asarray(plane_point, dtype=float).reshape(3)
    _, u, v = _plane_basis(plane_normal)
    step = phantom.voxel_size
    m = int(math.ceil(search_radius / step))
    coords = (np.arange(-m, m + 1)) * step
    gu, gv = np.meshgrid(coords, coords, indexing="ij")
    samples = plane_point + gu[..., None] * u + gv[..., None] * v

    rel = (samples - phantom.origin) / step
    idx = np.floor(rel).astype(int)
    dims = np.array(phantom.dims)
    inside = np.all((idx >= 0) & (idx < dims), axis=-1)
    occupied = np.ones(gu.shape, dtype=bool)  # outside the block counts as material
    ii = idx[inside]
    occupied[inside] = phantom.occupancy[ii[:, 0], ii[:, 1], ii[:, 2]]

    empty = ~occupied
    if not empty.any():
        raise NoTunnelError("no carved region intersects the measurement plane")

    labels, _ = ndimage.label(empty)
    center = (m, m)
    if empty[center]:
        target = labels[center]
    else:
        cand = np.argwhere(empty)
        dist2 = ((cand - np.array(center)) ** 2).sum(axis=1)
        target = labels[tuple(cand[int(np.argmin(dist2))])]
    component = labels == target
    edt = ndimage.distance_transform_edt(component, sampling=step)
    return float(2.0 * edt.max())


def tunnel_centerline(phantom: VoxelPhantom, axis: int = 0) -> np.ndarray:
    """Centerline of a carved tunnel advancing along one grid axis.

    Slices the Euclidean distance transform of the empty region
    perpendicular to the axis and takes the weighted centroid of each
    slice's near-maximum plateau, which tracks the locus of deepest
    clearance. End caps where the slice maximum drops well below the median
    are trimmed. Returns (N, 3) world points ordered along the axis.
    """
    empty = ~phantom.occupancy
    if not empty.any():
        raise NoTunnelError("phantom has no carved region")
    vs = phantom.voxel_size

    nz = np.argwhere(empty)
    lo = np.maximum(nz.min(axis=0) - 1, 0)
    hi = np.minimum(nz.max(axis=0) + 2, phantom.dims)
    crop = empty[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    crop = np.moveaxis(crop, axis, 0)

    edt = ndimage.distance_transform_edt(crop, sampling=vs)
    slice_max = edt.reshape(edt.shape[0], -1).max(axis=1)
    filled = slice_max > 0.0
    if not filled.any():
        raise NoTunnelError("carved region is degenerate")
    median = float(np.median(slice_max[filled]))
    keep = slice_max >= median - 1.5 * vs

    other_axes = [a for a in range(3) if a != axis]
    points = []
    for i in np.nonzero(keep)[0]:
        sl = edt[i]
        plateau = sl >= slice_max[i] - vs
        w = sl[plateau]
        jk = np.argwhere(plateau).astype(float)
        centroid = (jk * w[:, None]).sum(axis=0) / w.sum()
        index = np.empty(3)
        index[axis] = i + lo[axis]
        index[other_axes[0]] = centroid[0] + lo[other_axes[0]]
        index[other_axes[1]] = centroid[1] + lo[other_axes[1]]
        points.append(phantom.origin + (index + 0.5) * vs)
    return np.array(points)


def project(phantom: VoxelPhantom, axis) -> np.ndarray:
    """Orthographic material projection along a grid axis, as 8-bit image.

    Brightness is the air fraction along the ray: a full block projects to
    uniform 0, carved tunnels show as bright bands.
    """
    axis_index = {"x": 0, "y": 1, "z": 2}.get(axis, axis)
    if axis_index not in (0, 1, 2):
        raise ValueError("axis must be one of x, y, z (or 0, 1, 2)")
    counts = phantom.occupancy.sum(axis=axis_index)
    depth = phantom.dims[axis_index]
    image = np.round(255.0 * (1.0 - counts / depth)).astype(np.uint8)
    return image


def write_pgm(image: np.ndarray, path) -> None:
    """Binary PGM (P5, maxval 255)."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("image must be 2D")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        fh.write(image.tobytes())
