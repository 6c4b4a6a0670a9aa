import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SubmitQueue } from "../src/queue.js";
import type { ResponseBody } from "../src/types.js";

interface Script {
  /** statuses (or "net" for a network failure) consumed one per request */
  plan: (number | "net")[];
}

function makeFakeServer(script: Script) {
  const received: ResponseBody[] = [];
  let inFlight = 0;
  let maxInFlight = 0;
  const fetchImpl = async (_url: string, init?: { body?: string }) => {
    inFlight += 1;
    maxInFlight = Math.max(maxInFlight, inFlight);
    await new Promise((r) => setTimeout(r, 5));
    inFlight -= 1;
    const step = script.plan.length > 0 ? script.plan.shift()! : 200;
    if (step === "net") throw new TypeError("fetch failed");
    if (step === 200 && init?.body) received.push(JSON.parse(init.body));
    return { status: step, ok: step >= 200 && step < 300, json: async () => ({}) };
  };
  return { received, fetchImpl, maxInFlight: () => maxInFlight };
}

function body(taskId: number): ResponseBody {
  return { annotator_id: "ann-000001", task_id: taskId, chosen_position: 3 };
}

describe("SubmitQueue", () => {
  it("delivers clicks in order, one request at a time", async () => {
    const server = makeFakeServer({ plan: [] });
    const q = new SubmitQueue(new ApiClient("", server.fetchImpl));
    q.push(body(1));
    q.push(body(2));
    q.push(body(3));
    await q.settle();
    expect(server.received.map((b) => b.task_id)).toEqual([1, 2, 3]);
    expect(server.maxInFlight()).toBe(1);
  });

  it("retries after a network failure without losing the click", async () => {
    const server = makeFakeServer({ plan: ["net", "net", 200, 200] });
    const offline: boolean[] = [];
    const q = new SubmitQueue(new ApiClient("", server.fetchImpl), {
      onOffline: (o) => offline.push(o),
    });
    q.push(body(7));
    q.push(body(8));
    await q.settle();
    expect(server.received.map((b) => b.task_id)).toEqual([7, 8]);
    expect(offline).toContain(true);
    expect(offline[offline.length - 1]).toBe(false);
  }, 30_000);

  it("treats 409 as delivered (the server already has that answer)", async () => {
    const server = makeFakeServer({ plan: [409, 200] });
    const q = new SubmitQueue(new ApiClient("", server.fetchImpl));
    q.push(body(1));
    q.push(body(2));
    await q.settle();
    expect(server.received.map((b) => b.task_id)).toEqual([2]);
  });

  it("drops an actively rejected entry instead of retrying forever", async () => {
    const server = makeFakeServer({ plan: [422, 200] });
    const rejected: [ResponseBody, number][] = [];
    const q = new SubmitQueue(new ApiClient("", server.fetchImpl), {
      onRejected: (b, status) => rejected.push([b, status]),
    });
    q.push(body(1));
    q.push(body(2));
    await q.settle();
    expect(rejected).toHaveLength(1);
    expect(rejected[0]?.[0].task_id).toBe(1);
    expect(rejected[0]?.[1]).toBe(422);
    expect(server.received.map((b) => b.task_id)).toEqual([2]);
  });

  it("reports queue depth so the UI can show unsent counts", async () => {
    const server = makeFakeServer({ plan: [] });
    const depths: number[] = [];
    const q = new SubmitQueue(new ApiClient("", server.fetchImpl), {
      onDepth: (n) => depths.push(n),
    });
    q.push(body(1));
    q.push(body(2));
    await q.settle();
    expect(depths[0]).toBeGreaterThan(0);
    expect(depths[depths.length - 1]).toBe(0);
  });
});

describe("ApiClient", () => {
  it("resolves server-relative image paths against its base", () => {
    const api = new ApiClient("http://127.0.0.1:9", async () => {
      throw new Error("unused");
    });
    expect(api.resolve("/api/image/12")).toBe("http://127.0.0.1:9/api/image/12");
  });

  it("passes the annotator id when resuming", async () => {
    const urls: string[] = [];
    const api = new ApiClient("", async (url: string) => {
      urls.push(url);
      return {
        status: 200,
        ok: true,
        json: async () => ({ annotator_id: "ann-000001", tasks: [] }),
      };
    });
    await api.session();
    await api.session("ann-000001");
    expect(urls[0]).toBe("/api/session");
    expect(urls[1]).toBe("/api/session?annotator_id=ann-000001");
  });
});
