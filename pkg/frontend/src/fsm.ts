// Connection lifecycle: connecting -> live <-> degraded -> closed.
// A degradation status drops live to degraded; a run of clean frames
// promotes back.

export type ConnState = "connecting" | "live" | "degraded" | "closed";

const RECOVERY_FRAMES = 30;

export class ConnectionFsm {
  state: ConnState = "connecting";
  private sawSkeleton = false;
  private cleanFrames = 0;

  onOpen(): void {
    this.state = "connecting";
    this.sawSkeleton = false;
    this.cleanFrames = 0;
  }

  onSkeleton(): void {
    this.sawSkeleton = true;
  }

  onFrame(): void {
    if (this.state === "connecting" && this.sawSkeleton) {
      this.state = "live";
    } else if (this.state === "degraded") {
      this.cleanFrames += 1;
      if (this.cleanFrames >= RECOVERY_FRAMES) {
        this.state = "live";
        this.cleanFrames = 0;
      }
    }
  }

  onStatus(level: string): void {
    if (level === "degraded" && this.state === "live") {
      this.state = "degraded";
      this.cleanFrames = 0;
    } else if (level === "ok" && this.state === "degraded") {
      this.state = "live";
      this.cleanFrames = 0;
    }
  }

  onClose(): void {
    this.state = "closed";
  }

  get canSend(): boolean {
    return this.state === "live" || this.state === "degraded";
  }
}
