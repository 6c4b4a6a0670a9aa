/** Thin typed client over the evaluation HTTP API.
 *
 * All methods take the fetch implementation from the constructor so tests can
 * swap in a fake; the app passes the browser's fetch.
 */
import type { ResponseBody, SessionDoc } from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; ok: boolean; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike,
  ) {}

  /** Start a session, or resume one when an annotator id is known. */
  async session(annotatorId?: string): Promise<SessionDoc> {
    const q = annotatorId ? `?annotator_id=${encodeURIComponent(annotatorId)}` : "";
    const res = await this.fetchImpl(`${this.base}/api/session${q}`);
    if (!res.ok) throw new ApiError(`session request failed`, res.status);
    return (await res.json()) as SessionDoc;
  }

  /** Join a server-relative path (like the image URLs in a session) to the base. */
  resolve(path: string): string {
    return `${this.base}${path}`;
  }

  /**
   * Record one choice. Resolves "recorded" on 200 and "duplicate" on 409 —
   * both mean the server now holds an answer for this task. Anything else is
   * thrown for the retry queue to handle.
   */
  async submit(body: ResponseBody): Promise<"recorded" | "duplicate"> {
    const res = await this.fetchImpl(`${this.base}/api/response`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (res.status === 409) return "duplicate";
    if (!res.ok) throw new ApiError(`response rejected`, res.status);
    return "recorded";
  }

  async report(): Promise<unknown> {
    const res = await this.fetchImpl(`${this.base}/api/report`);
    if (!res.ok) throw new ApiError(`report request failed`, res.status);
    return res.json();
  }
}
