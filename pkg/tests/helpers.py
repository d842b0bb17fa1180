"""Shared fixtures-in-code for the test suite."""

from __future__ import annotations

import numpy as np

from mogan.features import features_from_clip
from mogan.skeleton import MotionClip, Skeleton, reference_skeleton
from mogan.synthgait import walking_corpus

TWO_JOINT_BVH = """HIERARCHY
ROOT root
{
  OFFSET 0.0 0.0 0.0
  CHANNELS 6 Xposition Yposition Zposition Yrotation Xrotation Zrotation
  JOINT child
  {
    OFFSET 0.0 -0.5 0.1
    CHANNELS 3 Yrotation Xrotation Zrotation
    End Site
    {
      OFFSET 0.0 -0.2 0.0
    }
  }
}
MOTION
Frames: 1
Frame Time: 0.033333
0 0 0 0 0 0 0 0 0
"""


def augmented_features(clip: MotionClip) -> np.ndarray:
    """Features with the two contact columns appended."""
    assert clip.contacts is not None
    return np.concatenate([features_from_clip(clip), clip.contacts[1:]], axis=1)


def random_poses(rng: np.random.Generator, n: int,
                 skel: Skeleton | None = None) -> np.ndarray:
    skel = skel or reference_skeleton()
    frames = rng.normal(0.0, 0.4, (n, skel.dof))
    frames[:, 4] = np.cumsum(rng.normal(0.0, 0.3, n))  # wandering yaw
    return frames


def rotate_clip_y(frames: np.ndarray, phi: float) -> np.ndarray:
    """Rotate whole-clip world data about the y axis (root yaw outermost)."""
    out = frames.copy()
    out[:, 4] += phi
    c, s = np.cos(phi), np.sin(phi)
    x, z = frames[:, 0].copy(), frames[:, 2].copy()
    out[:, 0] = c * x + s * z
    out[:, 2] = -s * x + c * z
    return out


def noisy_corpus(n_clips: int, n_frames: int, rng: np.random.Generator,
                 pose_noise: float = 0.04) -> list[np.ndarray]:
    """Walking corpus with mocap-like observation noise on the angles."""
    import mogan.features as F

    seqs = []
    for c in walking_corpus(n_clips, n_frames, rng, turning=True):
        frames = c.frames.copy()
        frames[:, 3:] += rng.normal(0.0, pose_noise, frames[:, 3:].shape)
        seqs.append(np.concatenate([F.features_from_poses(frames),
                                    c.contacts[1:]], axis=1))
    return seqs
