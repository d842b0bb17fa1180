"""The on-disk clip format: one JSON header line + one frame per line.

Frame rows are space-separated decimal floats (shortest round-trip
repr, so read(write(clip)) is bit exact).  When contacts are present
they are appended as two extra columns.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .skeleton import Joint, MotionClip, Skeleton

FORMAT = "mogan-clip-1"


def skeleton_to_dict(skel: Skeleton) -> dict:
    return {
        "joints": [
            {"name": j.name, "parent": j.parent,
             "offset": [float(v) for v in j.offset], "order": j.order}
            for j in skel.joints
        ],
        "end_effectors": list(skel.end_effectors),
    }


def skeleton_from_dict(d: dict) -> Skeleton:
    joints = [Joint(j["name"], j["parent"], np.array(j["offset"]), j["order"])
              for j in d["joints"]]
    return Skeleton(joints, list(d.get("end_effectors", [])))


def write_clip(clip: MotionClip, path: str | Path) -> None:
    header = {
        "format": FORMAT,
        "frame_rate": clip.frame_rate,
        "dims": clip.frames.shape[1],
        "has_contacts": clip.contacts is not None,
        "skeleton": skeleton_to_dict(clip.skeleton),
    }
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for i in range(clip.n_frames):
            row = list(clip.frames[i])
            if clip.contacts is not None:
                row.extend(clip.contacts[i])
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_clip(path: str | Path) -> MotionClip:
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("format") != FORMAT:
            raise ValueError(f"{path}: not a {FORMAT} file")
        dims = header["dims"]
        has_contacts = header["has_contacts"]
        width = dims + (2 if has_contacts else 0)
        rows = []
        for n, line in enumerate(f, start=2):
            vals = line.split()
            if not vals:
                continue
            if len(vals) != width:
                raise ValueError(f"{path}: line {n}: expected {width} columns")
            rows.append([float(v) for v in vals])
    data = np.array(rows)
    contacts = data[:, dims:] if has_contacts else None
    return MotionClip(skeleton_from_dict(header["skeleton"]),
                      header["frame_rate"], data[:, :dims], contacts)
