"""Rotation/translation-invariant state features and the ground transform.

A state feature is a flat vector with the same dimension D as a pose:

    [dt_x, dt_z, dr_y, t_y, r_x, r_z, theta_2 ... theta_d]

dt_x/dt_z are the root's planar displacement expressed in the previous
frame's yaw-aligned ground frame; dr_y is the yaw increment wrapped to
(-pi, pi]; the remaining entries are copied from the current pose.

Decoding walks a homogeneous ground transform whose rotation block is a
pure yaw and whose translation stays on the ground plane.  The
transform also carries the unwrapped yaw so long chains of decoded
poses reproduce the original continuous yaw channel exactly instead of
its (-pi, pi] representative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .skeleton import MotionClip, Skeleton, fk_positions

DT_X, DT_Z, DR_Y, T_Y, R_X, R_Z = range(6)


def wrap_angle(a):
    """Wrap radians into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), 2.0 * np.pi)


def yaw_matrix_2d(yaw: float) -> np.ndarray:
    """Action of a yaw rotation on ground-plane (x, z) coordinates."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, s], [-s, c]])


@dataclass
class GroundTransform:
    """Accumulated yaw + planar translation as a 4x4 homogeneous matrix."""

    matrix: np.ndarray  # (4, 4)
    yaw: float          # unwrapped; wrap_angle(yaw) matches the rotation block

    @classmethod
    def identity(cls) -> "GroundTransform":
        return cls(np.eye(4), 0.0)

    @classmethod
    def from_pose(cls, pose: np.ndarray) -> "GroundTransform":
        """Ground frame of a pose: its yaw and planar root position."""
        pose = np.asarray(pose, dtype=np.float64)
        m = np.eye(4)
        c, s = np.cos(pose[4]), np.sin(pose[4])
        m[0, 0] = m[2, 2] = c
        m[0, 2] = s
        m[2, 0] = -s
        m[0, 3] = pose[0]
        m[2, 3] = pose[2]
        return cls(m, float(pose[4]))

    def position_xz(self) -> tuple[float, float]:
        return float(self.matrix[0, 3]), float(self.matrix[2, 3])


def local_transform(feature: np.ndarray) -> np.ndarray:
    """Per-frame local matrix: yaw dr_y plus translation (dt_x, 0, dt_z)."""
    m = np.eye(4)
    c, s = np.cos(feature[DR_Y]), np.sin(feature[DR_Y])
    m[0, 0] = m[2, 2] = c
    m[0, 2] = s
    m[2, 0] = -s
    m[0, 3] = feature[DT_X]
    m[2, 3] = feature[DT_Z]
    return m


def accumulate_transform(t: GroundTransform, feature: np.ndarray) -> GroundTransform:
    """Advance the ground transform by one feature frame."""
    return GroundTransform(t.matrix @ local_transform(feature),
                           t.yaw + float(feature[DR_Y]))


def pose_pair_to_feature(q_prev: np.ndarray, q_cur: np.ndarray) -> np.ndarray:
    """Encode the transition q_prev -> q_cur as an invariant feature."""
    q_prev = np.asarray(q_prev, dtype=np.float64)
    q_cur = np.asarray(q_cur, dtype=np.float64)
    if q_prev.shape != q_cur.shape:
        raise ValueError("pose dimensions differ")
    x = q_cur.copy()
    delta = yaw_matrix_2d(-q_prev[4]) @ np.array([q_cur[0] - q_prev[0],
                                                  q_cur[2] - q_prev[2]])
    x[DT_X], x[DT_Z] = delta
    x[DR_Y] = wrap_angle(q_cur[4] - q_prev[4])
    x[T_Y] = q_cur[1]
    x[R_X] = q_cur[3]
    x[R_Z] = q_cur[5]
    return x


def feature_to_pose(t: GroundTransform,
                    feature: np.ndarray) -> tuple[np.ndarray, GroundTransform]:
    """Decode one feature: advance the transform, read the world pose."""
    feature = np.asarray(feature, dtype=np.float64)
    t_next = accumulate_transform(t, feature)
    pose = feature.copy()
    pose[0], pose[2] = t_next.position_xz()
    pose[1] = feature[T_Y]
    pose[3] = feature[R_X]
    pose[4] = t_next.yaw
    pose[5] = feature[R_Z]
    return pose, t_next


def features_from_poses(frames: np.ndarray) -> np.ndarray:
    """Encode (T, D) poses into (T-1, D) features, row i = frame i -> i+1."""
    frames = np.asarray(frames, dtype=np.float64)
    out = frames[1:].copy()
    yaw_prev = frames[:-1, 4]
    dx = frames[1:, 0] - frames[:-1, 0]
    dz = frames[1:, 2] - frames[:-1, 2]
    c, s = np.cos(yaw_prev), np.sin(yaw_prev)
    out[:, DT_X] = c * dx - s * dz
    out[:, DT_Z] = s * dx + c * dz
    out[:, DR_Y] = wrap_angle(frames[1:, 4] - frames[:-1, 4])
    out[:, T_Y] = frames[1:, 1]
    out[:, R_X] = frames[1:, 3]
    out[:, R_Z] = frames[1:, 5]
    return out


def poses_from_features(q0: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Decode features back to world poses, q0 included as the first row."""
    q0 = np.asarray(q0, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    out = np.empty((features.shape[0] + 1, q0.shape[0]))
    out[0] = q0
    t = GroundTransform.from_pose(q0)
    for i, f in enumerate(features):
        out[i + 1], t = feature_to_pose(t, f)
    return out


def features_from_clip(clip: MotionClip) -> np.ndarray:
    return features_from_poses(clip.frames)


def local_pose_from_feature(feature: np.ndarray) -> np.ndarray:
    """Pose in the character-local frame: root ground projection, yaw zeroed."""
    pose = np.asarray(feature, dtype=np.float64).copy()
    pose[0] = pose[2] = 0.0
    pose[1] = feature[T_Y]
    pose[3] = feature[R_X]
    pose[4] = 0.0
    pose[5] = feature[R_Z]
    return pose


def end_effector_trajectory(skel: Skeleton, features: np.ndarray,
                            frame_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """End-effector positions and velocities in the character-local frame.

    Returns (p, v), both (T, 3*E) with E = len(skel.end_effectors).
    Velocities are first differences scaled by the frame rate; frame 0
    copies frame 1.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise ValueError("need at least 2 feature frames")
    local = features.copy()
    local[:, [0, 2, 4]] = 0.0  # zero planar offset and yaw
    local[:, 1] = features[:, T_Y]
    local[:, 3] = features[:, R_X]
    local[:, 5] = features[:, R_Z]
    pos = fk_positions(skel, local)[:, skel.end_effectors, :]
    p = pos.reshape(features.shape[0], -1)
    v = np.empty_like(p)
    v[1:] = (p[1:] - p[:-1]) * frame_rate
    v[0] = v[1]
    return p, v


def inject_noise(features: np.ndarray, sigma: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise per dimension (training regularizer)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    features = np.asarray(features, dtype=np.float64)
    if sigma == 0:
        return features.copy()
    return features + rng.normal(0.0, sigma, size=features.shape)
