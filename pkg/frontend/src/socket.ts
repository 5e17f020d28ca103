/**
 * Reconnecting websocket wrapper: exponential backoff on disconnect,
 * schema validation before every send, and an injectable socket factory
 * so tests can drive it without a network.
 */
import { ClientFrame, ServerFrame, parseServerFrame, validateClientFrame } from "./protocol";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface TeleopSocketOptions {
  url: string;
  onFrame: (frame: ServerFrame) => void;
  onOpen?: () => void;
  onClose?: () => void;
  factory?: SocketFactory;
  backoffInitialMs?: number;
  backoffMaxMs?: number;
  scheduler?: (fn: () => void, ms: number) => unknown;
}

export class TeleopSocket {
  private socket: SocketLike | null = null;
  private backoff: number;
  private closed = false;
  private readonly opts: Required<Pick<TeleopSocketOptions, "backoffInitialMs" | "backoffMaxMs">> &
    TeleopSocketOptions;

  constructor(options: TeleopSocketOptions) {
    this.opts = { backoffInitialMs: 250, backoffMaxMs: 5000, ...options };
    this.backoff = this.opts.backoffInitialMs;
    this.connect();
  }

  private factory(url: string): SocketLike {
    if (this.opts.factory) return this.opts.factory(url);
    return new WebSocket(url) as unknown as SocketLike;
  }

  private schedule(fn: () => void, ms: number): void {
    (this.opts.scheduler ?? setTimeout)(fn, ms);
  }

  private connect(): void {
    if (this.closed) return;
    const socket = this.factory(this.opts.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoff = this.opts.backoffInitialMs;
      this.opts.onOpen?.();
    };
    socket.onclose = () => {
      this.socket = null;
      this.opts.onClose?.();
      if (!this.closed) {
        this.schedule(() => this.connect(), this.backoff);
        this.backoff = Math.min(this.backoff * 2, this.opts.backoffMaxMs);
      }
    };
    socket.onmessage = (ev) => {
      const frame = parseServerFrame(String(ev.data));
      if (frame) this.opts.onFrame(frame);
    };
  }

  /** Validate-then-send; invalid frames never reach the wire. */
  send(frame: ClientFrame): string | null {
    const problem = validateClientFrame(frame);
    if (problem) return problem;
    if (!this.socket) return "not connected";
    this.socket.send(JSON.stringify(frame));
    return null;
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
