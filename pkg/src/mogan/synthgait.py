"""Scripted toy corpora: an analytic walking gait and sine oscillators.

The walker plants each toe at a fixed world point for the whole stance
phase (two-link leg IK in the body's sagittal plane), so contact ground
truth is known exactly and stance-foot skate is zero by construction.
Used for training smoke tests and as the desk-scale training corpus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .skeleton import MotionClip, Skeleton, reference_skeleton


@dataclass
class GaitParams:
    frame_rate: float = 30.0
    cycle: float = 4.0 / 3.0    # seconds per full stride cycle
    stride: float = 0.4         # meters advanced by one foot per cycle
    duty: float = 0.6           # stance fraction of the cycle
    root_height: float = 0.78
    bob: float = 0.008          # root vertical bounce amplitude
    lift: float = 0.06          # swing-foot clearance
    arm_swing: float = 0.25     # radians
    yaw_amp: float = 0.0        # slow heading wiggle, radians
    yaw_period: float = 8.0     # seconds


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _leg_ik(dy: float, dz: float, l1: float, l2: float) -> tuple[float, float]:
    """Hip/knee pitch for an ankle offset (dy, dz) from the hip.

    Rotations are about the body x axis; the knee-forward branch is
    returned.  Raises if the target is out of reach.
    """
    r2 = dy * dy + dz * dz
    r = np.sqrt(r2)
    if r > l1 + l2 - 1e-9:
        raise ValueError(f"leg target out of reach (r={r:.3f})")
    cos_b = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    beta = float(np.arccos(np.clip(cos_b, -1.0, 1.0)))
    t_ang = float(np.arctan2(-dz, -dy))
    alpha = t_ang - float(np.arctan2(l2 * np.sin(beta), l1 + l2 * np.cos(beta)))
    return alpha, beta


def walking_clip(n_frames: int, params: GaitParams | None = None,
                 skel: Skeleton | None = None,
                 phase0: float = 0.0) -> MotionClip:
    """Scripted straight(ish) walk with exact contact labels."""
    p = params or GaitParams()
    skel = skel or reference_skeleton()
    fps = p.frame_rate
    speed = p.stride / p.cycle
    l1 = -skel.joints[skel.index("ltibia")].offset[1]
    l2 = -skel.joints[skel.index("lfoot")].offset[1]
    toe_off = skel.joints[skel.index("ltoe")].offset
    hip_off = {"l": skel.joints[skel.index("lfemur")].offset,
               "r": skel.joints[skel.index("rfemur")].offset}

    times = np.arange(n_frames) / fps
    yaw = p.yaw_amp * np.sin(2.0 * np.pi * times / p.yaw_period)
    root_y = p.root_height + p.bob * np.sin(4.0 * np.pi * times / p.cycle)
    # integrate heading to get the root ground path
    root_xz = np.zeros((n_frames, 2))
    step = speed / fps
    for i in range(1, n_frames):
        h = yaw[i - 1]
        root_xz[i] = root_xz[i - 1] + step * np.array([np.sin(h), np.cos(h)])

    def root_state(t: float) -> tuple[np.ndarray, float]:
        """Ground position and heading at continuous time (for planning)."""
        i = min(max(int(round(t * fps)), 0), n_frames - 1)
        return root_xz[i], yaw[i]

    def plant_point(side: str, t_mid: float) -> np.ndarray:
        """World toe position for the stance centered at time t_mid."""
        pos, h = root_state(t_mid)
        off = hip_off[side]
        c, s = np.cos(h), np.sin(h)
        return np.array([pos[0] + c * off[0], pos[1] - s * off[0]])

    frames = np.zeros((n_frames, skel.dof))
    contacts = np.zeros((n_frames, 2))
    sides = {"l": 0.0, "r": 0.5}
    col = {name: skel.angle_slice(skel.index(name))
           for name in ("lfemur", "ltibia", "lfoot", "rfemur", "rtibia",
                        "rfoot", "lhumerus", "rhumerus")}

    for f in range(n_frames):
        t = times[f]
        frames[f, 0], frames[f, 2] = root_xz[f]
        frames[f, 1] = root_y[f]
        frames[f, 4] = yaw[f]
        c, s = np.cos(yaw[f]), np.sin(yaw[f])
        for side, offset_phase in sides.items():
            raw_phase = t / p.cycle + phase0 - offset_phase
            cyc = int(np.floor(raw_phase))
            ph = raw_phase - cyc

            def stance_mid(cycle_idx: int) -> float:
                return (cycle_idx - phase0 + offset_phase + 0.5 * p.duty) * p.cycle

            if ph < p.duty:
                toe_xz = plant_point(side, stance_mid(cyc))
                lifted = 0.0
                contacts[f, 0 if side == "l" else 1] = 1.0
            else:
                u = _smoothstep((ph - p.duty) / (1.0 - p.duty))
                a = plant_point(side, stance_mid(cyc))
                b = plant_point(side, stance_mid(cyc + 1))
                toe_xz = a + u * (b - a)
                lifted = p.lift * np.sin(np.pi * np.clip(
                    (ph - p.duty) / (1.0 - p.duty), 0.0, 1.0))
            off = hip_off[side]
            hip = np.array([root_xz[f, 0] + c * off[0],
                            root_y[f] + off[1],
                            root_xz[f, 1] - s * off[0]])
            # flat foot: toe sits at ankle + R_y(yaw) @ toe offset
            ankle = np.array([toe_xz[0], lifted, toe_xz[1]]) - np.array(
                [c * toe_off[0] + s * toe_off[2], toe_off[1],
                 -s * toe_off[0] + c * toe_off[2]])
            delta = ankle - hip
            dy = delta[1]
            dz = s * delta[0] + c * delta[2]   # forward component, body frame
            alpha, beta = _leg_ik(dy, dz, l1, l2)
            frames[f, col[side + "femur"].start] = alpha
            frames[f, col[side + "tibia"].start] = beta
            frames[f, col[side + "foot"].start] = -(alpha + beta)
            # arms swing against the same-side leg
            arm = p.arm_swing * np.sin(2.0 * np.pi * (raw_phase + 0.5))
            frames[f, col[side + "humerus"].start] = arm
    return MotionClip(skel, fps, frames, contacts)


def walking_corpus(n_clips: int, n_frames: int, rng: np.random.Generator,
                   turning: bool = True) -> list[MotionClip]:
    """Small corpus varied in stride, cadence, phase and heading wiggle,
    so the learned next-frame distribution has usable spread."""
    clips = []
    for _ in range(n_clips):
        p = GaitParams()
        p.stride = float(rng.uniform(0.3, 0.48))
        p.cycle = float(rng.uniform(1.15, 1.5))
        p.arm_swing = float(rng.uniform(0.15, 0.35))
        if turning:
            p.yaw_amp = float(rng.uniform(0.1, 0.6))
            p.yaw_period = float(rng.uniform(3.5, 9.0))
        clips.append(walking_clip(n_frames, p, phase0=float(rng.uniform(0.0, 1.0))))
    return clips


def oscillator_sequences(n_seqs: int, n_frames: int,
                         rng: np.random.Generator) -> list[np.ndarray]:
    """2-D sin/cos features, the standard training smoke corpus."""
    out = []
    for _ in range(n_seqs):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        omega = rng.uniform(0.15, 0.25)
        t = np.arange(n_frames)
        seq = np.stack([np.sin(omega * t + phase),
                        np.cos(omega * t + phase)], axis=1)
        out.append(seq + rng.normal(0.0, 0.01, seq.shape))
    return out
