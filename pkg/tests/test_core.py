import numpy as np
import pytest

from tryonsplat.core import (Camera, GaussianCloud, GaussianPrimitive,
                             covariance3d, polar_rotation, quat_multiply,
                             quat_multiply_left_matrix, quat_normalize,
                             quat_to_rotmat, quat_to_rotmat_jacobian,
                             rotmat_to_quat)

from helpers import random_cloud


def test_identity_quaternion_gives_identity_matrix():
    assert np.array_equal(quat_to_rotmat([1.0, 0.0, 0.0, 0.0]), np.eye(3))


def test_quarter_turn_about_z_maps_x_to_y():
    c = np.cos(np.pi / 4)
    s = np.sin(np.pi / 4)
    R = quat_to_rotmat([c, 0.0, 0.0, s])
    assert np.allclose(R @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0],
                       atol=1e-12)


def test_random_unit_quaternions_give_orthonormal_matrices():
    rng = np.random.default_rng(3)
    for _ in range(20):
        q = quat_normalize(rng.normal(size=4))
        R = quat_to_rotmat(q)
        assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-10
        assert abs(np.linalg.det(R) - 1.0) < 1e-10


def test_double_cover():
    rng = np.random.default_rng(4)
    q = quat_normalize(rng.normal(size=4))
    assert np.array_equal(quat_to_rotmat(q), quat_to_rotmat(-q))


def test_rotmat_rejects_non_finite():
    with pytest.raises(ValueError):
        quat_to_rotmat([np.nan, 0.0, 0.0, 0.0])


def test_rotmat_jacobian_matches_finite_differences():
    rng = np.random.default_rng(5)
    q = quat_normalize(rng.normal(size=4))
    J = quat_to_rotmat_jacobian(q)
    h = 1e-6
    for k in range(4):
        dq = np.zeros(4)
        dq[k] = h
        fd = (quat_to_rotmat(q + dq) - quat_to_rotmat(q - dq)) / (2 * h)
        assert np.max(np.abs(fd - J[..., k])) < 1e-8


def test_covariance_identity():
    assert np.allclose(covariance3d([1.0, 1.0, 1.0], [1.0, 0, 0, 0]),
                       np.eye(3), atol=1e-15)


def test_covariance_axis_aligned():
    assert np.allclose(covariance3d([2.0, 1.0, 1.0], [1.0, 0, 0, 0]),
                       np.diag([4.0, 1.0, 1.0]), atol=1e-15)


def test_covariance_rotated_by_quarter_turn():
    c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    cov = covariance3d([2.0, 1.0, 1.0], [c, 0.0, 0.0, s])
    assert np.allclose(cov, np.diag([1.0, 4.0, 1.0]), atol=1e-12)


def test_covariance_symmetric_and_psd():
    rng = np.random.default_rng(6)
    for _ in range(25):
        s = rng.uniform(0.1, 3.0, 3)
        q = quat_normalize(rng.normal(size=4))
        cov = covariance3d(s, q)
        assert np.max(np.abs(cov - cov.T)) < 1e-12
        np.linalg.cholesky(cov)  # raises if not PD
        eig = np.sort(np.linalg.eigvalsh(cov))
        assert np.allclose(eig, np.sort(s ** 2), rtol=1e-10)


def test_covariance_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        covariance3d([1.0, 0.0, 1.0], [1.0, 0, 0, 0])
    with pytest.raises(ValueError):
        covariance3d([1.0, -0.5, 1.0], [1.0, 0, 0, 0])


def test_quat_multiply_matches_rotation_composition():
    rng = np.random.default_rng(7)
    qa = quat_normalize(rng.normal(size=4))
    qb = quat_normalize(rng.normal(size=4))
    Rab = quat_to_rotmat(quat_multiply(qa, qb))
    assert np.allclose(Rab, quat_to_rotmat(qa) @ quat_to_rotmat(qb),
                       atol=1e-12)


def test_quat_left_matrix_is_left_multiplication():
    rng = np.random.default_rng(8)
    qa = quat_normalize(rng.normal(size=4))
    qb = rng.normal(size=4)
    assert np.allclose(quat_multiply_left_matrix(qa) @ qb,
                       quat_multiply(qa, qb), atol=1e-14)


def test_rotmat_to_quat_round_trip():
    rng = np.random.default_rng(9)
    for _ in range(20):
        q = quat_normalize(rng.normal(size=4))
        if q[0] < 0:
            q = -q
        R = quat_to_rotmat(q)
        assert np.allclose(rotmat_to_quat(R), q, atol=1e-10)


def test_polar_rotation_recovers_rotation_from_blend():
    rng = np.random.default_rng(10)
    Ra = quat_to_rotmat(quat_normalize(rng.normal(size=4)))
    Rb = quat_to_rotmat(quat_normalize(rng.normal(size=4)))
    M = (0.7 * Ra + 0.3 * Rb)[None]
    R = polar_rotation(M)[0]
    assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-12
    assert np.linalg.det(R) > 0
    # a pure rotation is its own polar factor
    assert np.allclose(polar_rotation(Ra[None])[0], Ra, atol=1e-12)


def test_primitive_validation():
    good = GaussianPrimitive(position=np.zeros(3),
                             rotation=np.array([1.0, 0, 0, 0]),
                             scale=np.ones(3), opacity=0.5,
                             color=np.array([0.2, 0.4, 0.6]))
    good.validate()
    bad = GaussianPrimitive(position=np.zeros(3),
                            rotation=np.array([1.0, 0.1, 0, 0]),
                            scale=np.ones(3), opacity=0.5, color=np.zeros(3))
    with pytest.raises(ValueError):
        bad.validate()
    with pytest.raises(ValueError):
        GaussianPrimitive(position=np.zeros(3),
                          rotation=np.array([1.0, 0, 0, 0]),
                          scale=np.ones(3), opacity=1.5,
                          color=np.zeros(3)).validate()


def test_cloud_validation_and_accessors():
    rng = np.random.default_rng(11)
    cloud = random_cloud(rng, 5)
    cloud.validate()
    p = cloud.primitive(2)
    assert np.array_equal(p.position, cloud.positions[2])
    again = GaussianCloud.from_primitives([cloud.primitive(i)
                                           for i in range(5)])
    assert np.array_equal(again.colors, cloud.colors)
    cloud.scales[0, 0] = -1.0
    with pytest.raises(ValueError):
        cloud.validate()


def test_camera_validation_and_axes():
    cam = Camera.look_at(np.array([0.0, 0.0, 3.0]), np.zeros(3),
                         np.array([0.0, 1.0, 0.0]), fx=50, fy=50,
                         width=32, height=32)
    assert np.allclose(cam.position(), [0.0, 0.0, 3.0], atol=1e-12)
    # optical axis points from the camera toward the target
    assert np.allclose(cam.view_axis(), [0.0, 0.0, -1.0], atol=1e-12)
    with pytest.raises(ValueError):
        Camera(fx=-1, fy=1, cx=0, cy=0, R=np.eye(3), t=np.zeros(3),
               width=8, height=8).validate()
    with pytest.raises(ValueError):
        Camera(fx=1, fy=1, cx=0, cy=0, R=np.eye(3) * 1.01, t=np.zeros(3),
               width=8, height=8).validate()
