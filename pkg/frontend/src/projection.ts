// Stick-figure geometry: world joint positions to 2-D screen segments.
// Default view is top-down (x right, z up the screen); the side view
// shows z right, y up.

import { FrameMsg, SkeletonMsg } from "./protocol.js";

export type View = "top" | "side";

export interface Viewport {
  width: number;
  height: number;
  scale: number; // pixels per meter
  center: [number, number]; // world point mapped to the canvas middle
}

export interface Scene {
  bones: Array<[[number, number], [number, number]]>;
  joints: Array<[number, number]>;
  contactDots: Array<[number, number]>;
  arrow: { from: [number, number]; to: [number, number] } | null;
  speed: number;
}

function toScreen(p: number[], view: View, vp: Viewport): [number, number] {
  const [wx, wy] = view === "top" ? [p[0], p[2]] : [p[2], p[1]];
  return [
    vp.width / 2 + (wx - vp.center[0]) * vp.scale,
    vp.height / 2 - (wy - vp.center[1]) * vp.scale,
  ];
}

export function toeIndices(skel: SkeletonMsg): [number, number] {
  const find = (side: string) =>
    skel.joints.findIndex(
      (n) => n.toLowerCase().includes("toe") && n.toLowerCase().startsWith(side),
    );
  return [find("l"), find("r")];
}

export function projectFrame(
  frame: FrameMsg,
  skel: SkeletonMsg,
  view: View,
  vp: Viewport,
  targetYaw: number | null = null,
): Scene {
  const pts = frame.positions.map((p) => toScreen(p, view, vp));
  const bones: Scene["bones"] = [];
  for (let i = 1; i < skel.parents.length; i++) {
    bones.push([pts[skel.parents[i]], pts[i]]);
  }
  const contactDots: Scene["contactDots"] = [];
  const [lt, rt] = toeIndices(skel);
  if (frame.contacts[0] && lt >= 0) contactDots.push(pts[lt]);
  if (frame.contacts[1] && rt >= 0) contactDots.push(pts[rt]);

  let arrow: Scene["arrow"] = null;
  if (targetYaw !== null) {
    const root = frame.positions[0];
    // ground arrow: R_y(yaw) applied to the forward axis (0, 0, 1)
    const tip = [
      root[0] + Math.sin(targetYaw) * 0.6,
      0,
      root[2] + Math.cos(targetYaw) * 0.6,
    ];
    arrow = {
      from: toScreen([root[0], 0, root[2]], view, vp),
      to: toScreen(tip, view, vp),
    };
  }
  return { bones, joints: pts, contactDots, arrow, speed: frame.speed };
}
