"""Foot contact labeling and the motion-quality metrics built on it."""

from __future__ import annotations

import numpy as np

from .skeleton import MotionClip, Skeleton, fk_positions

HEIGHT_EPS = 0.05   # meters
SPEED_EPS = 0.2     # m/s


def toe_world_positions(skel: Skeleton, frames: np.ndarray) -> np.ndarray:
    """(T, 2, 3) world positions of the left and right toe joints."""
    left, right = skel.toe_indices()
    return fk_positions(skel, frames)[:, [left, right], :]


def label_contacts(clip: MotionClip, height_eps: float = HEIGHT_EPS,
                   speed_eps: float = SPEED_EPS) -> np.ndarray:
    """Per-frame (T, 2) contact bits: toe low AND toe slow.

    Speed uses central differences (one-sided at the ends) so stance
    boundaries are not smeared by a one-frame lag.
    """
    pos = toe_world_positions(clip.skeleton, clip.frames)
    speed = np.empty(pos.shape[:2])
    speed[1:-1] = np.linalg.norm(pos[2:] - pos[:-2], axis=-1) * clip.frame_rate / 2.0
    speed[0] = np.linalg.norm(pos[1] - pos[0], axis=-1) * clip.frame_rate
    speed[-1] = np.linalg.norm(pos[-1] - pos[-2], axis=-1) * clip.frame_rate
    return ((pos[..., 1] < height_eps) & (speed < speed_eps)).astype(np.float64)


def foot_skate(clip: MotionClip) -> float:
    """Mean world toe speed (m/s) over frames labeled in contact.

    The artifact this measures: a planted foot that still slides.
    Returns 0 when no frame is in contact.
    """
    if clip.contacts is None:
        raise ValueError("clip has no contact labels")
    pos = toe_world_positions(clip.skeleton, clip.frames)
    speed = np.zeros(pos.shape[:2])
    speed[1:] = np.linalg.norm(pos[1:] - pos[:-1], axis=-1) * clip.frame_rate
    mask = clip.contacts > 0.5
    mask[0] = False  # frame 0 has no predecessor
    if not mask.any():
        return 0.0
    return float(speed[mask].mean())


def second_difference_energy(frames: np.ndarray) -> float:
    """Mean squared second difference over all DOFs (smoothness proxy)."""
    frames = np.asarray(frames, dtype=np.float64)
    d2 = frames[2:] - 2.0 * frames[1:-1] + frames[:-2]
    return float(np.mean(d2 * d2))
