// Reconnecting WebSocket client feeding the view model and the FSM.
// The socket factory is injectable so tests can drive a fake server.

import { ConnectionFsm } from "./fsm.js";
import { ControlMsg, parseServerMessage } from "./protocol.js";
import { ViewModel } from "./viewmodel.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientHooks {
  onStatusText?: (text: string) => void;
  onErrorText?: (text: string) => void;
  scheduleReconnect?: (fn: () => void, delayMs: number) => void;
}

export class ControlClient {
  readonly fsm = new ConnectionFsm();
  private socket: SocketLike | null = null;
  private reconnectDelay = 500;

  constructor(
    private url: string,
    private makeSocket: SocketFactory,
    readonly vm: ViewModel,
    private hooks: ClientHooks = {},
  ) {}

  connect(): void {
    this.fsm.onOpen();
    const sock = this.makeSocket(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.reconnectDelay = 500;
    };
    sock.onmessage = (ev) => this.handle(ev.data);
    sock.onerror = () => undefined;
    sock.onclose = () => {
      this.fsm.onClose();
      const schedule =
        this.hooks.scheduleReconnect ??
        ((fn: () => void, ms: number) => setTimeout(fn, ms));
      schedule(() => this.connect(), this.reconnectDelay);
      this.reconnectDelay = Math.min(this.reconnectDelay * 2, 8000);
    };
  }

  handle(text: string): void {
    const msg = parseServerMessage(text);
    if (msg === null) return;
    switch (msg.type) {
      case "skeleton":
        this.vm.onSkeleton(msg);
        this.fsm.onSkeleton();
        break;
      case "frame":
        this.vm.onFrame(msg);
        this.fsm.onFrame();
        break;
      case "status":
        this.fsm.onStatus(msg.level);
        this.hooks.onStatusText?.(msg.text);
        break;
      case "error":
        this.hooks.onErrorText?.(msg.text);
        break;
    }
  }

  sendControl(msg: ControlMsg): void {
    if (this.socket && this.fsm.canSend) {
      this.socket.send(JSON.stringify(msg));
    }
  }
}
