"""Rotation representations and a pinhole perspective-n-point solver.

The rotation conventions used throughout the package:

* axis-angle vectors encode an angle theta = ||rv|| about the unit axis rv/theta;
* Euler angles follow the decomposition R = Rz(roll) @ Ry(yaw) @ Rx(pitch),
  reported in degrees;
* the camera is an undistorted pinhole with square pixels (fx == fy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import DataError

ORTHONORMAL_TOL = 1e-9
GIMBAL_EPS = 1e-6


class PnpDegenerateError(DataError):
    """Point configuration cannot constrain a pose (e.g. collinear image points)."""


class PnpConvergenceError(DataError):
    """Pose refinement failed to converge; carries the final RMS residual."""

    def __init__(self, message: str, rms_px: float):
        super().__init__(f"{message} (final RMS reprojection error {rms_px:.4g} px)")
        self.rms_px = rms_px


@dataclass(frozen=True)
class CameraModel:
    """Undistorted pinhole camera: focal length in pixels and principal point."""

    focal_length: float
    principal_point: tuple[float, float]

    def __post_init__(self) -> None:
        if not (math.isfinite(self.focal_length) and self.focal_length > 0):
            raise DataError(f"focal_length must be positive, got {self.focal_length}")
        object.__setattr__(
            self, "principal_point", (float(self.principal_point[0]), float(self.principal_point[1]))
        )

    @classmethod
    def for_image(cls, width: int, height: int) -> "CameraModel":
        """Default calibration: focal length = image width, principal point = center."""
        return cls(focal_length=float(width), principal_point=(width / 2.0, height / 2.0))


@dataclass(frozen=True)
class RotationVector:
    """Axis-angle rotation; the norm is the angle, canonicalized into [0, pi]."""

    rv: tuple[float, float, float]

    def __post_init__(self) -> None:
        v = np.array(self.rv, dtype=float)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise DataError(f"rotation vector must be 3 finite components, got {self.rv!r}")
        theta = float(np.linalg.norm(v))
        if theta > math.pi:
            # wrap the angle into [0, pi], flipping the axis when needed
            axis = v / theta
            theta = theta % (2.0 * math.pi)
            if theta > math.pi:
                theta = 2.0 * math.pi - theta
                axis = -axis
            v = axis * theta
        object.__setattr__(self, "rv", (float(v[0]), float(v[1]), float(v[2])))

    @property
    def angle_rad(self) -> float:
        return float(np.linalg.norm(self.rv))

    def as_array(self) -> np.ndarray:
        return np.array(self.rv, dtype=float)


@dataclass(frozen=True, eq=False)
class RotationMatrix:
    """Proper rotation: orthonormal 3x3 with determinant +1."""

    m: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.m, dtype=float)
        if arr.shape != (3, 3) or not np.all(np.isfinite(arr)):
            raise DataError("rotation matrix must be a finite 3x3 array")
        if np.max(np.abs(arr.T @ arr - np.eye(3))) > ORTHONORMAL_TOL:
            raise DataError("rotation matrix is not orthonormal within 1e-9")
        if abs(np.linalg.det(arr) - 1.0) > ORTHONORMAL_TOL:
            raise DataError("rotation matrix determinant is not +1 within 1e-9")
        arr.setflags(write=False)
        object.__setattr__(self, "m", arr)


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(rv: "RotationVector | np.ndarray") -> RotationMatrix:
    """Convert an axis-angle vector to its rotation matrix.

    R = I + sin(theta) K + (1 - cos(theta)) K^2 with K the skew matrix of the
    unit axis; a zero vector returns the identity exactly.
    """
    v = rv.as_array() if isinstance(rv, RotationVector) else np.array(rv, dtype=float)
    theta = float(np.linalg.norm(v))
    if theta == 0.0:
        return RotationMatrix(np.eye(3))
    k = skew(v / theta)
    r = np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)
    return RotationMatrix(r)


def _rodrigues_raw(v: np.ndarray) -> np.ndarray:
    # unchecked variant for solver inner loops
    theta = float(np.linalg.norm(v))
    if theta == 0.0:
        return np.eye(3)
    k = skew(v / theta)
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def rotation_to_euler(rm: RotationMatrix) -> tuple[float, float, float]:
    """Decompose R = Rz(roll) @ Ry(yaw) @ Rx(pitch) into degrees.

    pitch = atan2(R21, R22), yaw = atan2(-R20, sqrt(R00^2 + R10^2)),
    roll = atan2(R10, R00); near yaw = +-90 deg the sqrt term vanishes and the
    gimbal-lock branch folds roll into pitch (roll := 0).
    """
    r = rm.m
    sy = math.sqrt(r[0, 0] ** 2 + r[1, 0] ** 2)
    if sy < GIMBAL_EPS:
        pitch = math.atan2(-r[1, 2], r[1, 1])
        yaw = math.atan2(-r[2, 0], sy)
        roll = 0.0
    else:
        pitch = math.atan2(r[2, 1], r[2, 2])
        yaw = math.atan2(-r[2, 0], sy)
        roll = math.atan2(r[1, 0], r[0, 0])
    return math.degrees(pitch), math.degrees(yaw), math.degrees(roll)


def euler_to_rotation(pitch_deg: float, yaw_deg: float, roll_deg: float) -> RotationMatrix:
    """Compose R = Rz(roll) @ Ry(yaw) @ Rx(pitch) from degrees."""
    p, y, z = (math.radians(a) for a in (pitch_deg, yaw_deg, roll_deg))
    rx = np.array([[1, 0, 0], [0, math.cos(p), -math.sin(p)], [0, math.sin(p), math.cos(p)]])
    ry = np.array([[math.cos(y), 0, math.sin(y)], [0, 1, 0], [-math.sin(y), 0, math.cos(y)]])
    rz = np.array([[math.cos(z), -math.sin(z), 0], [math.sin(z), math.cos(z), 0], [0, 0, 1]])
    return RotationMatrix(rz @ ry @ rx)


def project_points(
    model_points: np.ndarray, rv: np.ndarray, t: np.ndarray, cam: CameraModel
) -> np.ndarray:
    """Project (n, 3) model points through rotation rv, translation t and camera cam."""
    r = _rodrigues_raw(np.asarray(rv, dtype=float))
    pc = np.asarray(model_points, dtype=float) @ r.T + np.asarray(t, dtype=float)
    z = pc[:, 2]
    f = cam.focal_length
    cx, cy = cam.principal_point
    return np.column_stack((f * pc[:, 0] / z + cx, f * pc[:, 1] / z + cy))


@dataclass(frozen=True)
class PnpResult:
    """Recovered pose plus the RMS reprojection error of the converged solution."""

    rotation: RotationVector
    translation: tuple[float, float, float]
    rms_px: float


_MAX_ITER = 100
_STEP_TOL = 1e-10
_DIFF_EPS = 1e-6


def _collinear(image_points: np.ndarray) -> bool:
    centered = image_points - image_points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s[1] < 1e-8 * max(s[0], 1.0)


def solve_pnp(model_points: np.ndarray, image_points: np.ndarray, cam: CameraModel) -> PnpResult:
    """Recover object pose from 2D-3D correspondences via damped Gauss-Newton.

    Minimizes mean squared pinhole reprojection error over (rotation vector,
    translation), starting from rv = 0, t = (0, 0, 3 * focal_length). Raises
    :class:`PnpDegenerateError` for configurations that cannot constrain the
    pose and :class:`PnpConvergenceError` if the step norm never drops below
    1e-10 within 100 iterations.
    """
    obj = np.asarray(model_points, dtype=float)
    img = np.asarray(image_points, dtype=float)
    if obj.shape[0] != img.shape[0] or obj.shape[0] < 4:
        raise DataError(f"need >= 4 matched points, got {obj.shape[0]} vs {img.shape[0]}")
    if _collinear(img):
        raise PnpDegenerateError("image points are collinear; pose is unconstrained")

    x = np.zeros(6)
    x[5] = 3.0 * cam.focal_length

    def residual(params: np.ndarray) -> np.ndarray:
        return (project_points(obj, params[:3], params[3:], cam) - img).ravel()

    r = residual(x)
    cost = float(r @ r)
    lam = 1e-3
    n_res = r.size
    for _ in range(_MAX_ITER):
        jac = np.empty((n_res, 6))
        for j in range(6):
            step = np.zeros(6)
            step[j] = _DIFF_EPS
            jac[:, j] = (residual(x + step) - residual(x - step)) / (2.0 * _DIFF_EPS)
        a = jac.T @ jac
        g = jac.T @ r
        accepted = False
        for _ in range(12):
            damped = a + lam * np.diag(np.maximum(np.diag(a), 1e-12))
            try:
                delta = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                raise PnpDegenerateError("normal equations are singular") from None
            trial = x + delta
            r_trial = residual(trial)
            cost_trial = float(r_trial @ r_trial)
            if cost_trial < cost:
                x, r, cost = trial, r_trial, cost_trial
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        step_norm = float(np.linalg.norm(delta))
        if step_norm < _STEP_TOL or not accepted:
            rms = math.sqrt(cost / n_res)
            if x[5] <= 0:
                raise PnpConvergenceError("solution places the object behind the camera", rms)
            return PnpResult(
                rotation=RotationVector((x[0], x[1], x[2])),
                translation=(float(x[3]), float(x[4]), float(x[5])),
                rms_px=rms,
            )
    raise PnpConvergenceError("pose refinement did not converge", math.sqrt(cost / n_res))
