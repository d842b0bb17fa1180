"""Differentiable kinematics on the tape.

Mirrors the plain-numpy forward kinematics and ground-transform
accumulation, but built from recorded ops so gradients flow from
end-effector positions and world root paths back to the features that
produced them.  Everything is batched: nodes carry (N, ...) rows where
N is batch*time or the particle count.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .skeleton import Skeleton

_AXIS_COLS = {
    # columns of the single-axis rotation matrices as (c, s) combinations:
    # each entry is three (coef_c, coef_s, const) triples
    "X": (((0, 0, 1), (0, 0, 0), (0, 0, 0)),
          ((0, 0, 0), (1, 0, 0), (0, 1, 0)),
          ((0, 0, 0), (0, -1, 0), (1, 0, 0))),
    "Y": (((1, 0, 0), (0, 0, 0), (0, -1, 0)),
          ((0, 0, 0), (0, 0, 1), (0, 0, 0)),
          ((0, 1, 0), (0, 0, 0), (1, 0, 0))),
    "Z": (((1, 0, 0), (0, 1, 0), (0, 0, 0)),
          ((0, -1, 0), (1, 0, 0), (0, 0, 0)),
          ((0, 0, 0), (0, 0, 0), (0, 0, 1))),
}


def axis_rotation_nodes(axis: str, angle: Node) -> Node:
    """(N,) angles -> (N, 3, 3) rotation matrices about one axis."""
    tape = angle.tape
    c, s = ad.cos(angle), ad.sin(angle)
    zero = tape.constant(np.zeros(angle.value.shape))
    one = tape.constant(np.ones(angle.value.shape))
    cols = []
    for col in _AXIS_COLS[axis]:
        rows = []
        for coef_c, coef_s, const in col:
            if coef_c:
                rows.append(c if coef_c == 1 else ad.mul(c, coef_c))
            elif coef_s:
                rows.append(s if coef_s == 1 else ad.mul(s, coef_s))
            elif const:
                rows.append(one)
            else:
                rows.append(zero)
        cols.append(ad.stack_last(rows))
    return ad.stack_last(cols)


def euler_nodes(angles: Node, order: str) -> Node:
    """(N, 3) x/y/z channel angles -> (N, 3, 3), first channel outermost."""
    out = None
    for ch in order:
        r = axis_rotation_nodes(ch, angles[..., "XYZ".index(ch)])
        out = r if out is None else ad.bmm(out, r)
    return out


def _ancestors_of(skel: Skeleton, targets: list[int]) -> list[int]:
    need = set()
    for t in targets:
        j = t
        while j != -1:
            need.add(j)
            j = skel.joints[j].parent
    return sorted(need)


def char_local_positions(skel: Skeleton, feat: Node,
                         targets: list[int]) -> dict[int, Node]:
    """Joint positions in the character-local frame from feature rows.

    feat (N, D) nodes; the local frame puts the root at (0, t_y, 0) with
    yaw removed, so only t_y, r_x, r_z and the joint angles matter.
    Returns {joint index: (N, 3) position} for the requested joints.
    """
    tape = feat.tape
    n = feat.value.shape[0]
    zero = tape.constant(np.zeros(n))
    needed = _ancestors_of(skel, targets)
    rot: dict[int, Node] = {}
    pos: dict[int, Node] = {}
    for i in needed:
        joint = skel.joints[i]
        if i == 0:
            # yaw-aligned root: R = Rx(r_x) @ Rz(r_z)
            rot[0] = ad.bmm(axis_rotation_nodes("X", feat[:, 4]),
                            axis_rotation_nodes("Z", feat[:, 5]))
            pos[0] = ad.stack_last([zero, feat[:, 3], zero])
        else:
            angles = ad.stack_last([feat[:, 6 + 3 * (i - 1) + k] for k in range(3)])
            local = euler_nodes(angles, joint.order)
            p = joint.parent
            off = ad.reshape(ad.bmm(rot[p], feat.tape.constant(
                np.broadcast_to(joint.offset.reshape(1, 3, 1), (n, 3, 1)).copy())),
                (n, 3))
            pos[i] = ad.add(pos[p], off)
            rot[i] = ad.bmm(rot[p], local)
    return {t: pos[t] for t in targets}


def end_effector_nodes(skel: Skeleton, feat: Node) -> Node:
    """(N, 3E) character-local end-effector positions."""
    pos = char_local_positions(skel, feat, list(skel.end_effectors))
    return ad.concat([pos[i] for i in skel.end_effectors], axis=-1)


def root_path_nodes(feats: list[Node], x0: float, z0: float, yaw0: float
                    ) -> tuple[list[Node], list[Node], list[Node]]:
    """Accumulate the world root path over per-frame feature nodes.

    feats[t] is (P, D); returns per-frame lists (xs, zs, yaws) of (P,)
    nodes starting from the constant initial ground state.
    """
    tape = feats[0].tape
    p = feats[0].value.shape[0]
    x = tape.constant(np.full(p, x0))
    z = tape.constant(np.full(p, z0))
    yaw = tape.constant(np.full(p, yaw0))
    xs, zs, yaws = [], [], []
    for f in feats:
        c, s = ad.cos(yaw), ad.sin(yaw)
        dtx, dtz = f[:, 0], f[:, 1]
        x = ad.add(x, ad.add(ad.mul(c, dtx), ad.mul(s, dtz)))
        z = ad.add(z, ad.sub(ad.mul(c, dtz), ad.mul(s, dtx)))
        yaw = ad.add(yaw, f[:, 2])
        xs.append(x)
        zs.append(z)
        yaws.append(yaw)
    return xs, zs, yaws


def world_point_nodes(local: Node, x: Node, z: Node, yaw: Node) -> Node:
    """Rotate a character-local point by the frame yaw and translate.

    local (P, 3), x/z/yaw (P,) -> (P, 3) world position.
    """
    c, s = ad.cos(yaw), ad.sin(yaw)
    lx, ly, lz = local[:, 0], local[:, 1], local[:, 2]
    wx = ad.add(ad.add(ad.mul(c, lx), ad.mul(s, lz)), x)
    wz = ad.add(ad.sub(ad.mul(c, lz), ad.mul(s, lx)), z)
    return ad.stack_last([wx, ly, wz])
