/** DOM rendering. One render() call redraws the whole app root from state --
 * the session is 25 tasks of 5 thumbnails, cheap enough that diffing would be
 * pure ceremony.
 */
import type { ApiClient } from "./api.js";
import type { SessionState } from "./state.js";
import { TASK_IMAGE_COUNT, canSubmit, currentTask, progressLabel } from "./state.js";

export interface Handlers {
  onSelect: (position: number) => void;
  onSubmit: () => void;
  onRetryStart: () => void;
}

export interface ViewFlags {
  offline: boolean;
  pendingUploads: number;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function screen(title: string, body: string): HTMLElement {
  const wrap = el("div", "screen");
  wrap.appendChild(el("h1", undefined, title));
  wrap.appendChild(el("p", undefined, body));
  return wrap;
}

/** Full-size image overlay; click anywhere to dismiss. */
function openZoom(root: HTMLElement, src: string): void {
  const overlay = el("div", "zoom-overlay");
  const img = el("img");
  img.src = src;
  img.alt = "zoomed image";
  overlay.appendChild(img);
  overlay.addEventListener("click", () => overlay.remove());
  root.appendChild(overlay);
}

function renderTask(
  root: HTMLElement,
  state: SessionState,
  api: ApiClient,
  handlers: Handlers,
  flags: ViewFlags,
): void {
  const task = currentTask(state);
  if (task === null) return;

  const header = el("header", "topbar");
  header.appendChild(el("span", "progress", `Task ${progressLabel(state)}`));
  if (flags.offline) {
    header.appendChild(
      el("span", "offline-badge", `reconnecting… (${flags.pendingUploads} unsent)`),
    );
  } else if (flags.pendingUploads > 0) {
    header.appendChild(el("span", "sync-badge", `saving (${flags.pendingUploads})…`));
  }
  root.appendChild(header);

  root.appendChild(
    el("p", "prompt", "Four of these images belong together. Click the one that does not, then confirm."),
  );

  const grid = el("div", "grid");
  task.images.forEach((imageUrl, i) => {
    const position = i + 1;
    const card = el("figure", "card");
    card.dataset["position"] = String(position);
    if (state.selection === position) card.classList.add("selected");

    const img = el("img", "thumb");
    img.loading = "lazy";
    img.src = api.resolve(imageUrl);
    img.alt = `image ${position} of ${TASK_IMAGE_COUNT}`;
    card.appendChild(img);

    const tag = el("figcaption", "slot", String(position));
    card.appendChild(tag);

    const zoom = el("button", "zoom-btn", "⤡");
    zoom.type = "button";
    zoom.title = "enlarge";
    zoom.addEventListener("click", (ev) => {
      ev.stopPropagation();
      openZoom(root, api.resolve(imageUrl));
    });
    card.appendChild(zoom);

    card.addEventListener("click", () => handlers.onSelect(position));
    grid.appendChild(card);
  });
  root.appendChild(grid);

  const submit = el("button", "submit", "This one doesn't belong");
  submit.type = "button";
  submit.disabled = !canSubmit(state);
  submit.addEventListener("click", handlers.onSubmit);
  root.appendChild(submit);
}

export function render(
  root: HTMLElement,
  state: SessionState | null,
  api: ApiClient,
  handlers: Handlers,
  flags: ViewFlags,
): void {
  root.textContent = "";

  if (state === null) {
    const wrap = screen("Can't reach the server", "The evaluation server did not answer. Check the connection and try again.");
    const retry = el("button", "submit", "Retry");
    retry.type = "button";
    retry.addEventListener("click", handlers.onRetryStart);
    wrap.appendChild(retry);
    root.appendChild(wrap);
    return;
  }

  switch (state.phase.kind) {
    case "closed":
      root.appendChild(screen("Experiment closed", "There are no tasks left to hand out. Thanks for stopping by."));
      return;
    case "aborted":
      root.appendChild(
        screen("Session aborted", `This session can't continue: ${state.phase.reason}. Please report this to the experiment owner.`),
      );
      return;
    case "done": {
      const wrap = screen(
        "All done",
        `You answered ${state.answeredCount} of ${state.tasks.length} tasks in this session.`,
      );
      if (flags.pendingUploads > 0) {
        wrap.appendChild(
          el("p", "sync-badge", `Hold on — ${flags.pendingUploads} answer(s) still uploading. Keep this tab open.`),
        );
      }
      root.appendChild(wrap);
      return;
    }
    case "task":
      renderTask(root, state, api, handlers, flags);
      return;
  }
}
