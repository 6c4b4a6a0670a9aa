/** Serialized submission queue.
 *
 * Every click is enqueued exactly once and stays until the server confirms it
 * (200 or 409 both count -- either way the answer is on disk server-side).
 * Entries are sent strictly in order, one in flight at a time; a network
 * failure pauses the queue and schedules a retry instead of dropping the
 * entry.
 */
import { ApiClient, ApiError } from "./api.js";
import type { ResponseBody } from "./types.js";

export interface QueueEvents {
  /** queue length after every change; 0 means all answers are on the server */
  onDepth?: (pending: number) => void;
  /** flips true while retrying after a network failure */
  onOffline?: (offline: boolean) => void;
  /** server actively rejected an entry (4xx other than 409); entry dropped */
  onRejected?: (body: ResponseBody, status: number) => void;
}

const RETRY_BASE_MS = 500;
const RETRY_MAX_MS = 8000;

export class SubmitQueue {
  private readonly pending: ResponseBody[] = [];
  private inFlight = false;
  private retryDelay = RETRY_BASE_MS;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly events: QueueEvents = {},
  ) {}

  get depth(): number {
    return this.pending.length + (this.inFlight ? 1 : 0);
  }

  push(body: ResponseBody): void {
    this.pending.push(body);
    this.events.onDepth?.(this.depth);
    void this.pump();
  }

  /** Resolve once the queue is empty (test hook; the UI just watches depth). */
  async settle(): Promise<void> {
    while (this.depth > 0) {
      await new Promise((r) => setTimeout(r, 20));
    }
  }

  private async pump(): Promise<void> {
    if (this.inFlight) return;
    const body = this.pending.shift();
    if (body === undefined) return;
    this.inFlight = true;
    try {
      await this.api.submit(body);
      this.retryDelay = RETRY_BASE_MS;
      this.events.onOffline?.(false);
    } catch (err) {
      if (err instanceof ApiError) {
        // The server understood us and said no (bad task id, bad position).
        // Retrying an actively rejected payload would loop forever.
        this.events.onRejected?.(body, err.status);
      } else {
        // Network-level failure: put it back at the head and try again later.
        this.pending.unshift(body);
        this.inFlight = false;
        this.events.onOffline?.(true);
        this.scheduleRetry();
        return;
      }
    }
    this.inFlight = false;
    this.events.onDepth?.(this.depth);
    void this.pump();
  }

  private scheduleRetry(): void {
    if (this.timer !== null) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.pump();
    }, this.retryDelay);
    this.retryDelay = Math.min(this.retryDelay * 2, RETRY_MAX_MS);
  }
}
