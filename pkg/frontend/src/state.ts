/** Session state machine, kept free of DOM so it can be tested directly.
 *
 * The rules it enforces:
 *   - tasks are answered strictly in order; there is no way back after submit
 *   - a submission is optimistic: the UI advances immediately and the network
 *     result only matters for the retry queue
 *   - a 409 means the server already has an answer, so the task counts as done
 *   - a malformed task (anything but 5 images) aborts the whole session
 */
import type { SessionDoc, TaskView } from "./types.js";

export const TASK_IMAGE_COUNT = 5;

export type Phase =
  | { kind: "task"; index: number }
  | { kind: "done" }
  | { kind: "closed" }
  | { kind: "aborted"; reason: string };

export interface SessionState {
  annotatorId: string;
  tasks: TaskView[];
  phase: Phase;
  /** position picked for the current task, null until the annotator clicks */
  selection: number | null;
  answeredCount: number;
}

export function initialState(doc: SessionDoc): SessionState {
  const base: Omit<SessionState, "phase"> = {
    annotatorId: doc.annotator_id,
    tasks: doc.tasks,
    selection: null,
    answeredCount: doc.tasks.filter((t) => t.answered !== null).length,
  };
  if (doc.tasks.length === 0) return { ...base, phase: { kind: "closed" } };
  const bad = doc.tasks.find((t) => t.images.length !== TASK_IMAGE_COUNT);
  if (bad !== undefined) {
    return {
      ...base,
      phase: {
        kind: "aborted",
        reason:
          `task ${bad.task_id} has ${bad.images.length} images ` +
          `(every task must have exactly ${TASK_IMAGE_COUNT})`,
      },
    };
  }
  // Resume at the first task the server has no answer for.
  const idx = doc.tasks.findIndex((t) => t.answered === null);
  if (idx < 0) return { ...base, phase: { kind: "done" } };
  return { ...base, phase: { kind: "task", index: idx } };
}

export function currentTask(s: SessionState): TaskView | null {
  return s.phase.kind === "task" ? (s.tasks[s.phase.index] ?? null) : null;
}

export function select(s: SessionState, position: number): SessionState {
  if (s.phase.kind !== "task") return s;
  if (position < 1 || position > TASK_IMAGE_COUNT) return s;
  return { ...s, selection: position };
}

export function canSubmit(s: SessionState): boolean {
  return s.phase.kind === "task" && s.selection !== null;
}

/**
 * Advance past the current task, marking it answered with the selection.
 * Called as soon as the submission is handed to the queue -- not when the
 * server acknowledges it. Returns the state unchanged when nothing is
 * submittable, so callers don't need their own guard.
 */
export function advance(s: SessionState): SessionState {
  if (!canSubmit(s) || s.phase.kind !== "task") return s;
  const idx = s.phase.index;
  const tasks = s.tasks.map((t, i) =>
    i === idx ? { ...t, answered: s.selection } : t,
  );
  const next = idx + 1;
  return {
    ...s,
    tasks,
    selection: null,
    answeredCount: s.answeredCount + 1,
    phase: next >= tasks.length ? { kind: "done" } : { kind: "task", index: next },
  };
}

/** 1-based progress label, e.g. "7/25". */
export function progressLabel(s: SessionState): string {
  const n = s.tasks.length;
  if (s.phase.kind === "task") return `${s.phase.index + 1}/${n}`;
  return `${n}/${n}`;
}
