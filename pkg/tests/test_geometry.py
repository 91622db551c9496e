import numpy as np
import pytest

from ctsdr.geometry import Frame, rotation_about, rotation_x


def test_rotation_about_x_quarter_turn():
    r = rotation_about(np.array([1.0, 0.0, 0.0]), np.pi / 2)
    np.testing.assert_allclose(r @ [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(r @ [0.0, 0.0, 1.0], [0.0, -1.0, 0.0], atol=1e-12)


def test_rotation_about_normalizes_axis():
    r1 = rotation_about(np.array([0.0, 0.0, 2.0]), 0.3)
    r2 = rotation_about(np.array([0.0, 0.0, 1.0]), 0.3)
    np.testing.assert_allclose(r1, r2, atol=1e-12)


def test_rotation_x_matches_general_form():
    np.testing.assert_allclose(
        rotation_x(0.7), rotation_about(np.array([1.0, 0.0, 0.0]), 0.7), atol=1e-12
    )


def test_rotation_is_orthonormal():
    rng = np.random.default_rng(7)
    for _ in range(20):
        axis = rng.normal(size=3)
        angle = rng.uniform(-np.pi, np.pi)
        r = rotation_about(axis, angle)
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


def test_identity_frame_tangent_is_plus_x():
    frame = Frame.identity()
    np.testing.assert_allclose(frame.tangent, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(frame.origin, [0.0, 0.0, 0.0])


def test_frame_rejects_non_orthonormal_orientation():
    bad = np.eye(3)
    bad[0, 1] = 0.01
    with pytest.raises(ValueError):
        Frame(origin=np.zeros(3), orientation=bad)


def test_frame_transform_point():
    frame = Frame(origin=np.array([1.0, 2.0, 3.0]), orientation=rotation_x(np.pi / 2))
    np.testing.assert_allclose(
        frame.transform_point(np.array([0.0, 1.0, 0.0])), [1.0, 2.0, 4.0], atol=1e-12
    )


def test_frame_compose_matches_sequential_transform():
    rng = np.random.default_rng(3)
    a = Frame(origin=rng.normal(size=3), orientation=rotation_about(rng.normal(size=3), 0.5))
    b = Frame(origin=rng.normal(size=3), orientation=rotation_about(rng.normal(size=3), -1.1))
    p = rng.normal(size=3)
    np.testing.assert_allclose(
        a.compose(b).transform_point(p),
        a.transform_point(b.transform_point(p)),
        atol=1e-12,
    )


def test_frame_json_round_trip():
    frame = Frame(origin=np.array([1.0, -2.0, 0.5]), orientation=rotation_x(0.3))
    back = Frame.from_json_dict(frame.to_json_dict())
    np.testing.assert_allclose(back.origin, frame.origin, atol=1e-15)
    np.testing.assert_allclose(back.orientation, frame.orientation, atol=1e-15)
