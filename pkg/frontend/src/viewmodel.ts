// Render-side state: the latest complete frame, the skeleton, the
// user's control, and a display-rate meter.  Frames arriving before
// the skeleton are buffered, never drawn.

import { FrameMsg, SkeletonMsg } from "./protocol.js";

export class ViewModel {
  skeleton: SkeletonMsg | null = null;
  frame: FrameMsg | null = null;
  control = { speed: 1.0, direction: 0.0 };
  private pending: FrameMsg[] = [];
  private renderStamps: number[] = [];

  onSkeleton(msg: SkeletonMsg): void {
    this.skeleton = msg;
    for (const f of this.pending) this.onFrame(f);
    this.pending = [];
  }

  onFrame(msg: FrameMsg): void {
    if (this.skeleton === null) {
      this.pending.push(msg); // buffered until the skeleton arrives
      return;
    }
    if (this.frame === null || msg.t >= this.frame.t) {
      this.frame = msg; // render always uses the newest complete frame
    }
  }

  displaySpeed(): number {
    return this.frame ? this.frame.speed : 0.0;
  }

  markRendered(nowMs: number): void {
    this.renderStamps.push(nowMs);
    const cutoff = nowMs - 2000;
    while (this.renderStamps.length && this.renderStamps[0] < cutoff) {
      this.renderStamps.shift();
    }
  }

  measuredFps(nowMs: number): number {
    const window = this.renderStamps.filter((t) => t >= nowMs - 1000);
    return window.length;
  }
}
