// Wire schema shared with the control service.

export interface SkeletonMsg {
  type: "skeleton";
  joints: string[];
  parents: number[];
  offsets: number[][];
}

export interface FrameMsg {
  type: "frame";
  t: number;
  positions: number[][]; // 19 x [x, y, z] meters
  contacts: [boolean, boolean];
  speed: number; // m/s
  yaw: number; // radians
}

export interface StatusMsg {
  type: "status";
  level: string;
  text: string;
}

export interface ErrorMsg {
  type: "error";
  text: string;
}

export type ServerMsg = SkeletonMsg | FrameMsg | StatusMsg | ErrorMsg;

export interface ControlMsg {
  type: "control";
  speed: number;
  direction: number;
}

export function parseServerMessage(text: string): ServerMsg | null {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const msg = obj as Record<string, unknown>;
  switch (msg.type) {
    case "skeleton":
      if (
        Array.isArray(msg.joints) &&
        Array.isArray(msg.parents) &&
        Array.isArray(msg.offsets) &&
        msg.joints.length === msg.parents.length
      ) {
        return msg as unknown as SkeletonMsg;
      }
      return null;
    case "frame":
      if (
        typeof msg.t === "number" &&
        Array.isArray(msg.positions) &&
        msg.positions.every((p) => Array.isArray(p) && p.length === 3) &&
        Array.isArray(msg.contacts) &&
        msg.contacts.length === 2 &&
        typeof msg.speed === "number" &&
        typeof msg.yaw === "number"
      ) {
        return msg as unknown as FrameMsg;
      }
      return null;
    case "status":
      return typeof msg.text === "string" ? (msg as unknown as StatusMsg) : null;
    case "error":
      return typeof msg.text === "string" ? (msg as unknown as ErrorMsg) : null;
    default:
      return null;
  }
}

export function validControl(msg: ControlMsg): boolean {
  return (
    msg.type === "control" &&
    Number.isFinite(msg.speed) &&
    Number.isFinite(msg.direction) &&
    msg.speed >= 0
  );
}
