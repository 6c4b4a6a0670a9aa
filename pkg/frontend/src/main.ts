/** Boot: fetch (or resume) a session, then run the select/submit loop.
 *
 * The annotator id lives in sessionStorage, so a reload resumes the same
 * session in the same tab while a second tab gets a session of its own.
 */
import { ApiClient } from "./api.js";
import { SubmitQueue } from "./queue.js";
import { advance, canSubmit, currentTask, initialState, select } from "./state.js";
import type { SessionState } from "./state.js";
import { render } from "./ui.js";

const STORAGE_KEY = "annotator_id";

export function boot(root: HTMLElement, base = ""): void {
  const api = new ApiClient(base, (url, init) => fetch(url, init));
  let state: SessionState | null = null;
  let offline = false;
  let pendingUploads = 0;

  const queue = new SubmitQueue(api, {
    onDepth: (n) => {
      pendingUploads = n;
      draw();
    },
    onOffline: (is) => {
      if (offline !== is) {
        offline = is;
        draw();
      }
    },
    onRejected: (body, status) => {
      console.error(`server rejected task ${body.task_id} with ${status}`);
    },
  });

  const handlers = {
    onSelect: (position: number) => {
      if (state === null) return;
      state = select(state, position);
      draw();
    },
    onSubmit: () => {
      if (state === null || !canSubmit(state)) return;
      const task = currentTask(state);
      const position = state.selection;
      if (task === null || position === null) return;
      queue.push({
        annotator_id: state.annotatorId,
        task_id: task.task_id,
        chosen_position: position,
      });
      state = advance(state);
      draw();
    },
    onRetryStart: () => void start(),
  };

  function draw(): void {
    render(root, state, api, handlers, { offline, pendingUploads });
  }

  async function start(): Promise<void> {
    try {
      const known = sessionStorage.getItem(STORAGE_KEY) ?? undefined;
      const doc = await api.session(known);
      sessionStorage.setItem(STORAGE_KEY, doc.annotator_id);
      state = initialState(doc);
    } catch {
      state = null;
    }
    draw();
  }

  void start();
}
