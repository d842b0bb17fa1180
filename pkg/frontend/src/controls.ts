// User input to wire messages: slider + arrow keys, coalesced to at
// most one control message per interval.

import { ControlMsg, validControl } from "./protocol.js";

export const MAX_UI_SPEED = 4.0; // m/s, slider range
export const YAW_RATE = 1.5; // rad/s while an arrow key is held
export const MIN_SEND_INTERVAL_MS = 100; // <= 10 messages per second

export function clampSpeed(v: number): number {
  return Math.min(Math.max(v, 0), MAX_UI_SPEED);
}

export function stepYaw(yaw: number, dir: -1 | 1, dtSeconds: number): number {
  let next = yaw + dir * YAW_RATE * dtSeconds;
  while (next > Math.PI) next -= 2 * Math.PI;
  while (next <= -Math.PI) next += 2 * Math.PI;
  return next;
}

export class CoalescedSender {
  private lastSent = -Infinity;
  private pending: ControlMsg | null = null;
  sent = 0;

  constructor(
    private send: (msg: ControlMsg) => void,
    private intervalMs: number = MIN_SEND_INTERVAL_MS,
  ) {}

  /** Queue the newest control; transmit only when the interval allows. */
  update(speed: number, direction: number, nowMs: number): void {
    const msg: ControlMsg = {
      type: "control",
      speed: clampSpeed(speed),
      direction,
    };
    if (!validControl(msg)) return;
    this.pending = msg;
    this.flush(nowMs);
  }

  /** Called periodically so a trailing update is not lost. */
  flush(nowMs: number): void {
    if (this.pending === null) return;
    if (nowMs - this.lastSent < this.intervalMs) return;
    this.send(this.pending);
    this.pending = null;
    this.lastSent = nowMs;
    this.sent += 1;
  }
}
