// WebSocket session client: NDJSON line handling and reconnect with
// exponential backoff. The socket constructor is injectable so the tests
// drive the client with a scripted fake instead of a network.

import { ServerMsg, decodeServer } from "./protocol.js";

export interface SocketLike {
  readonly readyState: number;
  send(text: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientHooks {
  onMessage: (msg: ServerMsg) => void;
  /** Socket-level status; "connected" still waits for the hello message. */
  onStatus: (status: "connecting" | "disconnected") => void;
  /** A fresh socket opened: stream-derived view state is now invalid. */
  onStreamStart: () => void;
}

const SOCKET_OPEN = 1; // WebSocket.OPEN
const BACKOFF_BASE_MS = 500;
const BACKOFF_MAX_MS = 8000;

export function backoffDelayMs(attempt: number): number {
  return Math.min(BACKOFF_BASE_MS * 2 ** attempt, BACKOFF_MAX_MS);
}

export class SessionClient {
  private socket: SocketLike | null = null;
  private url: string | null = null;
  private attempts = 0;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private closing = false;

  constructor(
    private readonly hooks: ClientHooks,
    private readonly socketFactory: SocketFactory = (url) => new WebSocket(url) as SocketLike,
  ) {}

  /** Open (or switch to) a session URL; retries keep using the last URL. */
  connect(url: string): void {
    this.url = url;
    this.attempts = 0;
    this.closing = false;
    this.clearRetry();
    if (this.socket !== null) {
      // Dropping the reference first keeps the old socket's terminal
      // events from scheduling retries (they check socket identity).
      const old = this.socket;
      this.socket = null;
      old.close();
    }
    this.dial();
  }

  /** Intentional close; no reconnect until connect() is called again. */
  disconnect(): void {
    this.closing = true;
    this.clearRetry();
    if (this.socket !== null) this.socket.close();
    this.socket = null;
    this.hooks.onStatus("disconnected");
  }

  /** Queue-free send; false when the socket is not open. */
  send(line: string): boolean {
    if (this.socket === null || this.socket.readyState !== SOCKET_OPEN) return false;
    this.socket.send(line);
    return true;
  }

  get connected(): boolean {
    return this.socket !== null && this.socket.readyState === SOCKET_OPEN;
  }

  private clearRetry(): void {
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
  }

  private dial(): void {
    if (this.url === null) return;
    this.hooks.onStatus("connecting");
    let socket: SocketLike;
    try {
      socket = this.socketFactory(this.url);
    } catch {
      this.scheduleRetry();
      return;
    }
    this.socket = socket;
    // Browsers fire error then close; Node's WebSocket fires only error
    // on a refused connection. Either event ends this socket, once.
    let settled = false;
    const failed = () => {
      if (settled || this.socket !== socket) return;
      settled = true;
      this.socket = null;
      if (this.closing) return;
      this.hooks.onStatus("disconnected");
      this.scheduleRetry();
    };
    socket.onopen = () => {
      this.attempts = 0;
      this.hooks.onStreamStart();
    };
    socket.onmessage = (ev) => {
      if (typeof ev.data !== "string") return;
      for (const line of ev.data.split("\n")) {
        if (line.trim() === "") continue;
        const msg = decodeServer(line);
        if (msg !== null) this.hooks.onMessage(msg);
      }
    };
    socket.onerror = failed;
    socket.onclose = failed;
  }

  private scheduleRetry(): void {
    if (this.closing || this.retryTimer !== null) return;
    const delay = backoffDelayMs(this.attempts);
    this.attempts += 1;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      this.dial();
    }, delay);
  }
}
