import math

import numpy as np
import pytest

from ctsdr.phantom import (
    NoTunnelError,
    VoxelBudgetError,
    VoxelPhantom,
    carve_swept_sphere,
    create_phantom,
    project,
    swept_occupied,
    tunnel_centerline,
    tunnel_diameter,
    write_pgm,
)

SPHERE_R3_VOLUME = 4.0 / 3.0 * math.pi * 27.0  # 113.097 mm^3
CAPSULE_R3_L50_VOLUME = math.pi * 9.0 * 50.0 + SPHERE_R3_VOLUME  # 1526.814 mm^3


def _block(size=(20.0, 20.0, 20.0), voxel=0.5, origin=None):
    if origin is None:
        origin = tuple(-s / 2 for s in size)
    return create_phantom(size=size, voxel_size=voxel, origin=origin)


def test_create_phantom_dims_and_count():
    ph = create_phantom(size=(10.0, 5.0, 2.5), voxel_size=0.5, origin=(0, 0, 0))
    assert ph.dims == (20, 10, 5)
    assert ph.voxel_count == 20 * 10 * 5
    assert ph.occupied_count() == ph.voxel_count


def test_create_phantom_enforces_budget():
    with pytest.raises(VoxelBudgetError):
        create_phantom(size=(10.0, 10.0, 10.0), voxel_size=0.1, origin=(0, 0, 0),
                       voxel_budget=1000)


def test_world_to_index_inside_and_outside():
    ph = create_phantom(size=(10.0, 10.0, 10.0), voxel_size=1.0, origin=(0, 0, 0))
    assert ph.world_to_index((0.5, 0.5, 0.5)) == (0, 0, 0)
    assert ph.world_to_index((9.5, 9.5, 9.5)) == (9, 9, 9)
    assert ph.world_to_index((-0.5, 5.0, 5.0)) is None
    assert ph.world_to_index((5.0, 5.0, 10.5)) is None


def test_carve_sphere_volume_oracle():
    # Counting voxel centers quantizes the boundary; with the sphere centered
    # on a voxel corner the 0.2 mm grid lands ~1.3% high, so allow 2%.
    ph = _block(voxel=0.2)
    p = np.zeros(3)
    removed = carve_swept_sphere(ph, np.array([p, p]), 3.0)
    volume = removed * ph.voxel_size**3
    assert volume == pytest.approx(SPHERE_R3_VOLUME, rel=0.02)


def test_carve_capsule_volume_oracle():
    ph = create_phantom(size=(60.0, 10.0, 10.0), voxel_size=0.2, origin=(-5, -5, -5))
    path = np.array([[0.0, 0.0, 0.0], [50.0, 0.0, 0.0]])
    removed = carve_swept_sphere(ph, path, 3.0)
    volume = removed * ph.voxel_size**3
    assert volume == pytest.approx(CAPSULE_R3_L50_VOLUME, rel=0.02)


def test_carve_volume_converges_with_voxel_refinement():
    errors = []
    for voxel in (0.5, 0.1):
        ph = _block(voxel=voxel)
        removed = carve_swept_sphere(ph, np.array([np.zeros(3), np.zeros(3)]), 3.0)
        errors.append(abs(removed * voxel**3 - SPHERE_R3_VOLUME) / SPHERE_R3_VOLUME)
    assert errors[1] < errors[0]
    assert errors[1] < 0.005


def test_carve_is_idempotent():
    ph = _block()
    path = np.array([[-2.0, 0.0, 0.0], [6.0, 1.0, 0.0]])
    first = carve_swept_sphere(ph, path, 2.0)
    occupancy_after = ph.occupancy.copy()
    second = carve_swept_sphere(ph, path, 2.0)
    assert first > 0
    assert second == 0
    np.testing.assert_array_equal(ph.occupancy, occupancy_after)


def test_carve_monotonicity():
    ph = _block()
    rng = np.random.default_rng(2)
    last = ph.occupied_count()
    for _ in range(10):
        path = rng.uniform(-8, 8, size=(3, 3))
        carve_swept_sphere(ph, path, rng.uniform(0.5, 2.0))
        count = ph.occupied_count()
        assert count <= last
        last = count


def test_carve_order_independence():
    path_a = np.array([[-5.0, -2.0, 0.0], [5.0, 2.0, 1.0]])
    path_b = np.array([[0.0, -5.0, -1.0], [1.0, 6.0, 2.0]])
    ph1 = _block()
    carve_swept_sphere(ph1, path_a, 1.5)
    carve_swept_sphere(ph1, path_b, 1.5)
    ph2 = _block()
    carve_swept_sphere(ph2, path_b, 1.5)
    carve_swept_sphere(ph2, path_a, 1.5)
    np.testing.assert_array_equal(ph1.occupancy, ph2.occupancy)


def test_swept_occupied_counts_without_mutating():
    ph = _block()
    path = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]])
    before = ph.occupancy.copy()
    seen = swept_occupied(ph, path, 2.0)
    np.testing.assert_array_equal(ph.occupancy, before)
    removed = carve_swept_sphere(ph, path, 2.0)
    assert seen == removed
    assert swept_occupied(ph, path, 2.0) == 0


def test_reset_refills_block():
    ph = _block()
    carve_swept_sphere(ph, np.array([[0.0, 0, 0], [5.0, 0, 0]]), 2.0)
    assert ph.occupied_count() < ph.voxel_count
    ph.reset()
    assert ph.occupied_count() == ph.voxel_count


def test_tunnel_diameter_straight_tunnel():
    ph = create_phantom(size=(30.0, 16.0, 16.0), voxel_size=0.2, origin=(0, -8, -8))
    carve_swept_sphere(ph, np.array([[-1.0, 0, 0], [31.0, 0, 0]]), 3.7)
    d = tunnel_diameter(ph, plane_point=(15.0, 0.0, 0.0), plane_normal=(1.0, 0.0, 0.0))
    assert d == pytest.approx(7.4, abs=2 * ph.voxel_size)


def test_tunnel_diameter_raises_on_solid_block():
    ph = _block()
    with pytest.raises(NoTunnelError):
        tunnel_diameter(ph, plane_point=(0.0, 0.0, 0.0), plane_normal=(1.0, 0.0, 0.0))


def test_tunnel_diameter_edge_tunnel_not_inflated():
    """Air outside the block must count as material, not as tunnel."""
    ph = create_phantom(size=(30.0, 12.0, 12.0), voxel_size=0.2, origin=(0, -6, -6))
    # tunnel hugging the top face: the open boundary must not enlarge it
    carve_swept_sphere(ph, np.array([[-1.0, 4.0, 0.0], [31.0, 4.0, 0.0]]), 2.0)
    d = tunnel_diameter(ph, plane_point=(15.0, 4.0, 0.0), plane_normal=(1.0, 0.0, 0.0))
    assert d < 4.0 + 4 * ph.voxel_size


def test_tunnel_centerline_straight_tunnel():
    ph = create_phantom(size=(30.0, 16.0, 16.0), voxel_size=0.2, origin=(0, -8, -8))
    carve_swept_sphere(ph, np.array([[-1.0, 0, 0], [31.0, 0, 0]]), 3.0)
    ridge = tunnel_centerline(ph)
    assert len(ridge) > 50
    # ridge hugs the tunnel axis
    assert np.max(np.abs(ridge[:, 1])) < ph.voxel_size
    assert np.max(np.abs(ridge[:, 2])) < ph.voxel_size
    # slices come out ordered along the tunnel
    assert np.all(np.diff(ridge[:, 0]) > 0)


def test_snapshot_round_trip(tmp_path):
    ph = _block(voxel=0.4)
    carve_swept_sphere(ph, np.array([[0.0, 0, 0], [5.0, 3.0, 1.0]]), 1.5)
    prefix = str(tmp_path / "block")
    ph.save_snapshot(prefix)
    back = VoxelPhantom.load_snapshot(prefix)
    assert back.dims == ph.dims
    assert back.voxel_size == ph.voxel_size
    np.testing.assert_allclose(back.origin, ph.origin)
    assert back.material == ph.material
    np.testing.assert_array_equal(back.occupancy, ph.occupancy)


def test_projection_brightness_tracks_carving():
    ph = _block(voxel=0.5)
    top = project(ph, "z")
    assert top.shape == (ph.dims[0], ph.dims[1])
    assert top.dtype == np.uint8
    assert top.max() == 0  # solid block is fully dark
    carve_swept_sphere(ph, np.array([[-8.0, 0, 0], [8.0, 0, 0]]), 3.0)
    assert project(ph, "z").max() > 0
    with pytest.raises(ValueError):
        project(ph, "w")


def test_write_pgm_format(tmp_path):
    image = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = tmp_path / "img.pgm"
    write_pgm(image, path)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n")
    assert raw[-12:] == bytes(range(12))
