import { describe, expect, it } from "vitest";

import {
  advance,
  canSubmit,
  currentTask,
  initialState,
  progressLabel,
  select,
} from "../src/state.js";
import type { SessionDoc, TaskView } from "../src/types.js";

function task(id: number, answered: number | null = null, images = 5): TaskView {
  return {
    task_id: id,
    images: Array.from({ length: images }, (_, i) => `/api/image/${id * 10 + i}`),
    answered,
  };
}

function doc(tasks: TaskView[]): SessionDoc {
  return { annotator_id: "ann-000042", tasks };
}

describe("initialState", () => {
  it("starts at the first task of a fresh session", () => {
    const s = initialState(doc([task(1), task(2), task(3)]));
    expect(s.phase).toEqual({ kind: "task", index: 0 });
    expect(s.answeredCount).toBe(0);
    expect(progressLabel(s)).toBe("1/3");
  });

  it("shows the closed screen when the server hands out zero tasks", () => {
    const s = initialState(doc([]));
    expect(s.phase.kind).toBe("closed");
  });

  it("aborts on a task that does not have exactly five images", () => {
    const s = initialState(doc([task(1), task(2, null, 4), task(3)]));
    expect(s.phase.kind).toBe("aborted");
    if (s.phase.kind === "aborted") {
      expect(s.phase.reason).toContain("task 2");
      expect(s.phase.reason).toContain("4 images");
    }
  });

  it("aborts on a six-image task too", () => {
    const s = initialState(doc([task(1, null, 6)]));
    expect(s.phase.kind).toBe("aborted");
  });

  it("resumes at the first unanswered task", () => {
    const s = initialState(doc([task(1, 3), task(2, 5), task(3), task(4)]));
    expect(s.phase).toEqual({ kind: "task", index: 2 });
    expect(s.answeredCount).toBe(2);
    expect(progressLabel(s)).toBe("3/4");
  });

  it("goes straight to done when everything is already answered", () => {
    const s = initialState(doc([task(1, 1), task(2, 2)]));
    expect(s.phase.kind).toBe("done");
  });
});

describe("select / submit", () => {
  it("cannot submit until a position is picked", () => {
    let s = initialState(doc([task(1), task(2)]));
    expect(canSubmit(s)).toBe(false);
    s = select(s, 4);
    expect(canSubmit(s)).toBe(true);
    expect(s.selection).toBe(4);
  });

  it("rejects out-of-range positions", () => {
    let s = initialState(doc([task(1)]));
    s = select(s, 0);
    expect(s.selection).toBeNull();
    s = select(s, 6);
    expect(s.selection).toBeNull();
  });

  it("advance records the answer, clears the selection, moves forward", () => {
    let s = initialState(doc([task(1), task(2)]));
    s = select(s, 2);
    s = advance(s);
    expect(s.tasks[0]?.answered).toBe(2);
    expect(s.selection).toBeNull();
    expect(s.phase).toEqual({ kind: "task", index: 1 });
    expect(s.answeredCount).toBe(1);
  });

  it("advance without a selection is a no-op", () => {
    const s0 = initialState(doc([task(1), task(2)]));
    expect(advance(s0)).toBe(s0);
  });

  it("never walks backwards: the index only grows, one per submit", () => {
    let s = initialState(doc([task(1), task(2), task(3)]));
    const seen: number[] = [];
    while (s.phase.kind === "task") {
      seen.push(s.phase.index);
      s = advance(select(s, 1));
    }
    expect(seen).toEqual([0, 1, 2]);
    expect(s.phase.kind).toBe("done");
    expect(s.answeredCount).toBe(3);
  });

  it("finishing the last task lands on the done screen", () => {
    let s = initialState(doc([task(1)]));
    s = advance(select(s, 5));
    expect(s.phase.kind).toBe("done");
    expect(currentTask(s)).toBeNull();
    expect(progressLabel(s)).toBe("1/1");
  });
});
