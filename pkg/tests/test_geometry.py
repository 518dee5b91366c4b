import math

import numpy as np
import pytest

from engagekit.datamodel import DataError
from engagekit.geometry import (
    CameraModel,
    PnpConvergenceError,
    PnpDegenerateError,
    RotationMatrix,
    RotationVector,
    euler_to_rotation,
    project_points,
    rodrigues,
    rotation_to_euler,
    solve_pnp,
)
from engagekit.visual import FACE_MODEL_MM


def compose_oracle(pitch_deg, yaw_deg, roll_deg):
    """Independent Rz @ Ry @ Rx composition, spelled out for the tests."""
    p, y, z = (math.radians(a) for a in (pitch_deg, yaw_deg, roll_deg))
    cp, sp, cy, sy, cz, sz = math.cos(p), math.sin(p), math.cos(y), math.sin(y), math.cos(z), math.sin(z)
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


class TestRodrigues:
    def test_zero_vector_is_identity_exactly(self):
        assert np.array_equal(rodrigues(RotationVector((0.0, 0.0, 0.0))).m, np.eye(3))

    def test_quarter_turn_about_z(self):
        r = rodrigues(RotationVector((0.0, 0.0, math.pi / 2)))
        assert np.abs(r.m @ np.array([1.0, 0.0, 0.0]) - np.array([0.0, 1.0, 0.0])).max() < 1e-12

    def test_random_rotations_are_proper(self, rng):
        for _ in range(1000):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            theta = rng.uniform(1e-6, math.pi - 1e-6)
            r = rodrigues(RotationVector(tuple(axis * theta))).m
            assert np.abs(r.T @ r - np.eye(3)).max() < 1e-9
            assert abs(np.linalg.det(r) - 1.0) < 1e-9

    def test_rotation_vector_canonicalized(self):
        rv = RotationVector((0.0, 0.0, 1.5 * math.pi))  # wraps to angle pi/2 about -z
        assert rv.angle_rad == pytest.approx(math.pi / 2)
        assert np.abs(rodrigues(rv).m - rodrigues(np.array([0, 0, 1.5 * math.pi])).m).max() < 1e-12


class TestRotationMatrix:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(DataError):
            RotationMatrix(np.eye(3) * 1.001)

    def test_rejects_reflection(self):
        m = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(DataError):
            RotationMatrix(m)


class TestEuler:
    def test_identity(self):
        assert rotation_to_euler(RotationMatrix(np.eye(3))) == (0.0, 0.0, 0.0)

    def test_roundtrip_known_triple(self):
        rm = RotationMatrix(compose_oracle(10.0, 20.0, 5.0))
        p, y, r = rotation_to_euler(rm)
        assert (p, y, r) == pytest.approx((10.0, 20.0, 5.0), abs=1e-9)

    def test_roundtrip_many_triples(self, rng):
        for _ in range(300):
            angles = rng.uniform(-80.0, 80.0, 3)
            p, y, r = rotation_to_euler(RotationMatrix(compose_oracle(*angles)))
            assert np.abs(np.array([p, y, r]) - angles).max() < 1e-6

    def test_gimbal_lock_recomposes(self):
        rm = compose_oracle(10.0, 90.0, 5.0)
        p, y, r = rotation_to_euler(RotationMatrix(rm))
        assert all(math.isfinite(a) for a in (p, y, r))
        assert np.abs(compose_oracle(p, y, r) - rm).max() < 1e-6

    def test_library_composition_matches_oracle(self, rng):
        for _ in range(50):
            angles = rng.uniform(-180.0, 180.0, 3)
            assert np.abs(euler_to_rotation(*angles).m - compose_oracle(*angles)).max() < 1e-12


def project_oracle(model, rm, t, cam):
    """Reference pinhole projection used to fabricate PnP problems."""
    pc = model @ rm.T + t
    f = cam.focal_length
    cx, cy = cam.principal_point
    return np.column_stack((f * pc[:, 0] / pc[:, 2] + cx, f * pc[:, 1] / pc[:, 2] + cy))


CAM = CameraModel.for_image(640, 480)


class TestSolvePnp:
    def test_identity_pose(self):
        t = np.array([0.0, 0.0, 1000.0])
        img = project_oracle(FACE_MODEL_MM, np.eye(3), t, CAM)
        res = solve_pnp(FACE_MODEL_MM, img, CAM)
        pitch, yaw, roll = rotation_to_euler(rodrigues(res.rotation))
        assert abs(pitch) < 0.1 and abs(yaw) < 0.1 and abs(roll) < 0.1
        assert np.abs(np.array(res.translation) - t).max() < 1.0
        assert res.rms_px < 1e-6

    def test_known_rotation_noiseless(self):
        rm = compose_oracle(15.0, -20.0, 5.0)
        t = np.array([30.0, -40.0, 1500.0])
        img = project_oracle(FACE_MODEL_MM, rm, t, CAM)
        res = solve_pnp(FACE_MODEL_MM, img, CAM)
        angles = rotation_to_euler(rodrigues(res.rotation))
        assert np.abs(np.array(angles) - (15.0, -20.0, 5.0)).max() < 0.5

    def test_noisy_recovery_95th_percentile(self, rng):
        errors = []
        for seed in range(100):
            local = np.random.default_rng(seed)
            angles = local.uniform(-30.0, 30.0, 3)
            rm = compose_oracle(*angles)
            t = np.array([0.0, 0.0, 1400.0])
            img = project_oracle(FACE_MODEL_MM, rm, t, CAM) + local.normal(0.0, 0.5, (6, 2))
            res = solve_pnp(FACE_MODEL_MM, img, CAM)
            rec = rotation_to_euler(rodrigues(res.rotation))
            errors.append(np.abs(np.array(rec) - angles).max())
        assert np.quantile(errors, 0.95) < 2.0

    def test_collinear_points_degenerate(self):
        img = np.column_stack((np.linspace(100, 200, 6), np.linspace(100, 200, 6)))
        with pytest.raises(PnpDegenerateError):
            solve_pnp(FACE_MODEL_MM, img, CAM)

    def test_reports_rms_on_noisy_fit(self):
        rm = compose_oracle(5.0, 5.0, 0.0)
        img = project_oracle(FACE_MODEL_MM, rm, np.array([0, 0, 1200.0]), CAM)
        img[0] += 3.0  # one bad correspondence
        res = solve_pnp(FACE_MODEL_MM, img, CAM)
        assert res.rms_px > 0.1

    def test_translation_in_front_of_camera(self):
        img = project_oracle(FACE_MODEL_MM, np.eye(3), np.array([0, 0, 900.0]), CAM)
        res = solve_pnp(FACE_MODEL_MM, img, CAM)
        assert res.translation[2] > 0


class TestProjectPoints:
    def test_matches_oracle(self, rng):
        rv = np.array([0.1, -0.2, 0.05])
        rm = rodrigues(rv).m
        t = np.array([10.0, 20.0, 2000.0])
        ours = project_points(FACE_MODEL_MM, rv, t, CAM)
        assert np.abs(ours - project_oracle(FACE_MODEL_MM, rm, t, CAM)).max() < 1e-9
