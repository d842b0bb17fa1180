"""Skeleton description, pose layout and forward kinematics.

A pose is a flat float64 vector

    [t_x, t_y, t_z, r_x, r_y, r_z, theta_2 ... theta_d]

with root translation in meters, root rotation in radians and three
rotation channels (x, y, z components) per non-root joint, so
``D = 6 + 3 * (n_joints - 1)``.  Angles are stored unwrapped.  The world
is right handed with y up; the ground plane is y = 0.

Per-joint rotation matrices compose in the joint's declared channel
order with the first listed channel outermost, e.g. order "YXZ" means
``R = R_y(a_y) @ R_x(a_x) @ R_z(a_z)`` (the Z rotation acts on the
vector first).  The reference skeleton uses "YXZ" everywhere, which
keeps the root yaw an outermost factor so the planar-delta feature
encoding stays exactly rotation invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROOT_POS = slice(0, 3)
ROOT_ROT = slice(3, 6)


@dataclass
class Joint:
    name: str
    parent: int            # -1 for the root
    offset: np.ndarray     # (3,) meters, in the parent frame
    order: str = "YXZ"     # rotation channel order, first listed outermost


@dataclass
class Skeleton:
    joints: list[Joint]
    end_effectors: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.joints:
            raise ValueError("skeleton needs at least one joint")
        if self.joints[0].parent != -1:
            raise ValueError("joint 0 must be the root")
        names = set()
        for i, j in enumerate(self.joints):
            j.offset = np.asarray(j.offset, dtype=np.float64)
            if i > 0 and not (0 <= j.parent < i):
                raise ValueError(f"joint {i} ({j.name}): parent must precede it")
            if j.name in names:
                raise ValueError(f"duplicate joint name {j.name!r}")
            names.add(j.name)
            if not np.all(np.isfinite(j.offset)):
                raise ValueError(f"joint {i} ({j.name}): non-finite offset")
            if sorted(j.order) != ["X", "Y", "Z"]:
                raise ValueError(f"joint {i}: bad rotation order {j.order!r}")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def dof(self) -> int:
        return 6 + 3 * (self.n_joints - 1)

    def index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(name)

    def angle_slice(self, joint: int) -> slice:
        """Pose columns holding joint's (x, y, z) rotation channels."""
        if joint == 0:
            return ROOT_ROT
        start = 6 + 3 * (joint - 1)
        return slice(start, start + 3)

    def infer_end_effectors(self) -> list[int]:
        """Hands and toes matched by name (may be empty for odd rigs)."""
        out = []
        for key in ("hand", "toe"):
            for side in ("l", "r"):
                for i, j in enumerate(self.joints):
                    n = j.name.lower()
                    if key in n and (n.startswith(side)
                                     or n.startswith(("left" if side == "l"
                                                      else "right"))):
                        out.append(i)
                        break
        return out

    def toe_indices(self) -> tuple[int, int]:
        """(left, right) toe joints, matched by name."""
        left = right = None
        for i, j in enumerate(self.joints):
            n = j.name.lower()
            if "toe" not in n:
                continue
            if n.startswith(("l", "left")):
                left = i
            elif n.startswith(("r", "right")):
                right = i
        if left is None or right is None:
            raise ValueError("skeleton does not declare left/right toe joints")
        return left, right


_AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}


def axis_rotation(axis: str, angles: np.ndarray) -> np.ndarray:
    """Rotation matrices about a world axis; angles (...,) -> (..., 3, 3)."""
    a = np.asarray(angles, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    if axis == "X":
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = c
        out[..., 1, 2] = -s
        out[..., 2, 1] = s
        out[..., 2, 2] = c
    elif axis == "Y":
        out[..., 0, 0] = c
        out[..., 0, 2] = s
        out[..., 1, 1] = 1.0
        out[..., 2, 0] = -s
        out[..., 2, 2] = c
    elif axis == "Z":
        out[..., 0, 0] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
        out[..., 1, 1] = c
        out[..., 2, 2] = 1.0
    else:
        raise ValueError(f"bad axis {axis!r}")
    return out


def euler_to_matrix(angles_xyz: np.ndarray, order: str) -> np.ndarray:
    """Compose (..., 3) x/y/z channel angles into (..., 3, 3) matrices."""
    angles_xyz = np.asarray(angles_xyz, dtype=np.float64)
    out = None
    for ch in order:
        r = axis_rotation(ch, angles_xyz[..., _AXIS_INDEX[ch]])
        out = r if out is None else out @ r
    return out


def matrix_to_euler_yxz(r: np.ndarray) -> np.ndarray:
    """Extract (x, y, z) channel angles with R = Ry @ Rx @ Rz.

    Used to re-express foreign root conventions; gimbal-locked inputs
    (|r[1,2]| == 1) resolve with the z channel set to 0.
    """
    r = np.asarray(r, dtype=np.float64)
    sx = np.clip(-r[..., 1, 2], -1.0, 1.0)
    ax = np.arcsin(sx)
    cx = np.cos(ax)
    near_lock = np.abs(cx) < 1e-9
    ay = np.where(near_lock,
                  np.arctan2(r[..., 0, 2] * np.sign(sx), r[..., 0, 0]),
                  np.arctan2(r[..., 0, 2], r[..., 2, 2]))
    az = np.where(near_lock, 0.0, np.arctan2(r[..., 1, 0], r[..., 1, 1]))
    return np.stack([ax, ay, az], axis=-1)


def fk_positions(skel: Skeleton, frames: np.ndarray) -> np.ndarray:
    """World joint positions for a batch of poses.

    frames (T, D) or (D,) -> (T, J, 3) or (J, 3).
    """
    frames = np.asarray(frames, dtype=np.float64)
    single = frames.ndim == 1
    if single:
        frames = frames[None, :]
    if frames.shape[1] != skel.dof:
        raise ValueError(f"pose dim {frames.shape[1]} != skeleton dof {skel.dof}")
    t = frames.shape[0]
    rot = np.empty((t, skel.n_joints, 3, 3))
    pos = np.empty((t, skel.n_joints, 3))
    for i, joint in enumerate(skel.joints):
        local = euler_to_matrix(frames[:, skel.angle_slice(i)], joint.order)
        if i == 0:
            rot[:, 0] = local
            pos[:, 0] = frames[:, ROOT_POS]
        else:
            p = joint.parent
            pos[:, i] = pos[:, p] + np.einsum("tij,j->ti", rot[:, p], joint.offset)
            rot[:, i] = rot[:, p] @ local
    out = pos
    return out[0] if single else out


def forward_kinematics(skel: Skeleton, pose: np.ndarray) -> np.ndarray:
    """World positions (J, 3) of every joint for one pose."""
    return fk_positions(skel, pose)


def reference_skeleton() -> Skeleton:
    """The 19-joint capture skeleton (root pelvis + 18 joints), meters."""
    j = Joint
    joints = [
        j("root", -1, [0.0, 0.0, 0.0]),
        j("thorax", 0, [0.0, 0.24, 0.0]),
        j("head", 1, [0.0, 0.25, 0.0]),
        j("lclavicle", 1, [0.02, 0.18, 0.0]),
        j("lhumerus", 3, [0.17, 0.0, 0.0]),
        j("lradius", 4, [0.0, -0.26, 0.0]),
        j("lhand", 5, [0.0, -0.25, 0.0]),
        j("rclavicle", 1, [-0.02, 0.18, 0.0]),
        j("rhumerus", 7, [-0.17, 0.0, 0.0]),
        j("rradius", 8, [0.0, -0.26, 0.0]),
        j("rhand", 9, [0.0, -0.25, 0.0]),
        j("lfemur", 0, [0.09, -0.03, 0.0]),
        j("ltibia", 11, [0.0, -0.40, 0.0]),
        j("lfoot", 12, [0.0, -0.40, 0.0]),
        j("ltoe", 13, [0.0, -0.05, 0.12]),
        j("rfemur", 0, [-0.09, -0.03, 0.0]),
        j("rtibia", 15, [0.0, -0.40, 0.0]),
        j("rfoot", 16, [0.0, -0.40, 0.0]),
        j("rtoe", 17, [0.0, -0.05, 0.12]),
    ]
    skel = Skeleton(joints)
    skel.end_effectors = [skel.index(n) for n in ("lhand", "rhand", "ltoe", "rtoe")]
    return skel


@dataclass
class MotionClip:
    """A pose sequence with optional per-frame foot contact labels."""

    skeleton: Skeleton
    frame_rate: float
    frames: np.ndarray                 # (T, D)
    contacts: np.ndarray | None = None  # (T, 2) of {0, 1}, [left, right]

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError("clip needs a non-empty (T, D) frame matrix")
        if self.frames.shape[1] != self.skeleton.dof:
            raise ValueError("frame dim does not match skeleton")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if self.contacts is not None:
            self.contacts = np.asarray(self.contacts, dtype=np.float64)
            if self.contacts.shape != (self.frames.shape[0], 2):
                raise ValueError("contacts must be (T, 2)")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def downsample(clip: MotionClip, factor: int) -> MotionClip:
    """Keep frames 0, factor, 2*factor, ... and divide the frame rate."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor >= clip.n_frames:
        raise ValueError(f"factor {factor} >= frame count {clip.n_frames}")
    contacts = None if clip.contacts is None else clip.contacts[::factor]
    return MotionClip(clip.skeleton, clip.frame_rate / factor,
                      clip.frames[::factor].copy(), contacts)
