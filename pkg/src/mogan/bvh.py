"""BVH motion capture reading and writing.

Supports the usual HIERARCHY/MOTION subset: root with 6 channels,
joints with 3 rotation channels, End Site blocks, angles in degrees.
Channel order is preserved per joint (first listed channel is the
outermost rotation factor).
"""

from __future__ import annotations

import numpy as np

from .skeleton import Joint, MotionClip, Skeleton

_ROT_CHANNELS = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}
_POS_CHANNELS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}


class BvhError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.i = 0

    def next_tokens(self):
        while self.i < len(self.lines):
            self.i += 1
            toks = self.lines[self.i - 1].split()
            if toks:
                return toks
        return None

    def expect(self, *want: str):
        toks = self.next_tokens()
        if toks is None or [t.upper() for t in toks[: len(want)]] != list(want):
            raise BvhError(f"expected {' '.join(want)}", self.i)
        return toks


def parse_bvh(text: str) -> tuple[Skeleton, MotionClip]:
    """Parse BVH text into a skeleton and a clip (angles in radians)."""
    r = _Reader(text)
    r.expect("HIERARCHY")
    toks = r.expect("ROOT")
    joints: list[Joint] = []
    channels: list[tuple[int, list[str]]] = []  # (joint index, channel names)

    def parse_joint(name: str, parent: int):
        idx = len(joints)
        joints.append(Joint(name, parent, np.zeros(3)))
        r.expect("{")
        toks = r.expect("OFFSET")
        if len(toks) != 4:
            raise BvhError("OFFSET needs 3 values", r.i)
        joints[idx].offset = np.array([float(v) for v in toks[1:4]])
        toks = r.expect("CHANNELS")
        n = int(toks[1])
        names = toks[2 : 2 + n]
        if len(names) != n:
            raise BvhError("channel count mismatch", r.i)
        rots = [c for c in names if c in _ROT_CHANNELS]
        if len(rots) != 3:
            raise BvhError(f"joint {name!r} needs 3 rotation channels", r.i)
        for c in names:
            if c not in _ROT_CHANNELS and c not in _POS_CHANNELS:
                raise BvhError(f"unsupported channel {c!r}", r.i)
            if c in _POS_CHANNELS and parent != -1:
                raise BvhError("position channels only supported on the root", r.i)
        joints[idx].order = "".join(_ROT_CHANNELS[c] for c in rots)
        channels.append((idx, names))
        while True:
            toks = r.next_tokens()
            if toks is None:
                raise BvhError("unexpected end of hierarchy", r.i)
            head = toks[0].upper()
            if head == "}":
                return
            if head == "JOINT":
                parse_joint(toks[1], idx)
            elif head == "END" or head == "END_SITE":
                r.expect("{")
                r.expect("OFFSET")
                r.expect("}")
            else:
                raise BvhError(f"unexpected token {toks[0]!r}", r.i)

    parse_joint(toks[1], -1)
    skel = Skeleton(joints)
    skel.end_effectors = skel.infer_end_effectors()

    toks = r.expect("MOTION")
    toks = r.expect("FRAMES:")
    n_frames = int(toks[1])
    toks = r.expect("FRAME", "TIME:")
    frame_time = float(toks[2])
    if frame_time <= 0:
        raise BvhError("frame time must be positive", r.i)

    n_chan = sum(len(names) for _, names in channels)
    frames = np.zeros((n_frames, skel.dof))
    for f in range(n_frames):
        toks = r.next_tokens()
        if toks is None:
            raise BvhError(f"MOTION declares {n_frames} frames, found {f}", r.i)
        if len(toks) != n_chan:
            raise BvhError(f"expected {n_chan} values, found {len(toks)}", r.i)
        vals = iter(float(v) for v in toks)
        for idx, names in channels:
            ang = skel.angle_slice(idx)
            for c in names:
                v = next(vals)
                if c in _POS_CHANNELS:
                    frames[f, _POS_CHANNELS[c]] = v
                else:
                    frames[f, ang.start + "XYZ".index(_ROT_CHANNELS[c])] = np.deg2rad(v)
    return skel, MotionClip(skel, 1.0 / frame_time, frames)


def write_bvh(skel: Skeleton, clip: MotionClip) -> str:
    """Serialize a clip as BVH text (degrees, root position channels)."""
    children: list[list[int]] = [[] for _ in skel.joints]
    for i, j in enumerate(skel.joints):
        if j.parent >= 0:
            children[j.parent].append(i)
    lines = ["HIERARCHY"]
    column_joints: list[int] = []

    def emit(idx: int, depth: int):
        j = skel.joints[idx]
        pad = "  " * depth
        kw = "ROOT" if idx == 0 else "JOINT"
        lines.append(f"{pad}{kw} {j.name}")
        lines.append(pad + "{")
        lines.append(f"{pad}  OFFSET {j.offset[0]:.6f} {j.offset[1]:.6f} {j.offset[2]:.6f}")
        rots = " ".join(f"{c}rotation" for c in j.order)
        if idx == 0:
            lines.append(f"{pad}  CHANNELS 6 Xposition Yposition Zposition {rots}")
        else:
            lines.append(f"{pad}  CHANNELS 3 {rots}")
        column_joints.append(idx)
        if not children[idx]:
            lines.append(f"{pad}  End Site")
            lines.append(pad + "  {")
            lines.append(f"{pad}    OFFSET 0.000000 0.000000 0.000000")
            lines.append(pad + "  }")
        for c in children[idx]:
            emit(c, depth + 1)
        lines.append(pad + "}")

    emit(0, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {clip.n_frames}")
    lines.append(f"Frame Time: {1.0 / clip.frame_rate!r}")
    for f in range(clip.n_frames):
        vals: list[float] = []
        for idx in column_joints:
            j = skel.joints[idx]
            ang = skel.angle_slice(idx)
            if idx == 0:
                vals.extend(clip.frames[f, 0:3])
            for c in j.order:
                vals.append(np.rad2deg(clip.frames[f, ang.start + "XYZ".index(c)]))
        lines.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"
