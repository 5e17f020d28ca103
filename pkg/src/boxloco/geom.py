"""Quaternion and planar-rotation helpers shared across the package.

Quaternions are (w, x, y, z), scalar first, and are kept unit-norm by the
callers. Everything here is plain numpy on small arrays.
"""
from __future__ import annotations

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.sqrt(float(np.dot(q, q)))
    if n == 0.0:
        return IDENTITY_QUAT.copy()
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q."""
    w, x, y, z = q
    # v' = v + 2*cross(q_vec, cross(q_vec, v) + w*v)
    uvx = y * v[2] - z * v[1] + w * v[0]
    uvy = z * v[0] - x * v[2] + w * v[1]
    uvz = x * v[1] - y * v[0] + w * v[2]
    return np.array([
        v[0] + 2.0 * (y * uvz - z * uvy),
        v[1] + 2.0 * (z * uvx - x * uvz),
        v[2] + 2.0 * (x * uvy - y * uvx),
    ])


def quat_rotate_inv(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_rotate(quat_conj(q), v)


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def quat_to_rpy(q: np.ndarray) -> tuple[float, float, float]:
    """Extrinsic x-y-z (roll, pitch, yaw) angles of q."""
    w, x, y, z = q
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    s = 2.0 * (w * y - z * x)
    pitch = np.arcsin(np.clip(s, -1.0, 1.0))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return float(roll), float(pitch), float(yaw)


def quat_yaw(q: np.ndarray) -> float:
    w, x, y, z = q
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])


def strip_yaw(q: np.ndarray) -> np.ndarray:
    """Quaternion q with its yaw component removed (roll/pitch remainder)."""
    return quat_normalize(quat_mul(quat_conj(quat_from_yaw(quat_yaw(q))), q))


def tilt_angles(q: np.ndarray) -> tuple[float, float]:
    """Yaw-free (roll, pitch) of q; invariant under world yaw rotations.

    The roll/pitch outputs of the rpy decomposition only read the rotation
    matrix's bottom row, which a world-yaw premultiplication leaves alone,
    so no explicit yaw stripping is needed.
    """
    w, x, y, z = q
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    s = 2.0 * (w * y - z * x)
    pitch = np.arcsin(s if -1.0 < s < 1.0 else np.clip(s, -1.0, 1.0))
    return float(roll), float(pitch)


def rot2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def yaw_into(yaw: float, v_xy: np.ndarray) -> np.ndarray:
    """World-frame xy vector expressed in a frame yawed by `yaw`."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([c * v_xy[0] + s * v_xy[1], -s * v_xy[0] + c * v_xy[1]])


def yaw_outof(yaw: float, v_xy: np.ndarray) -> np.ndarray:
    """Frame-local xy vector expressed in world coordinates."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([c * v_xy[0] - s * v_xy[1], s * v_xy[0] + c * v_xy[1]])


def wrap_angle(a: float) -> float:
    return float(np.arctan2(np.sin(a), np.cos(a)))
