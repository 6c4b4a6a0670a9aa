/** Wire types for the evaluation API. */

export interface TaskView {
  task_id: number;
  /** five image URLs in display order */
  images: string[];
  /** position already recorded for this task, or null */
  answered: number | null;
}

export interface SessionDoc {
  annotator_id: string;
  tasks: TaskView[];
}

export interface ResponseBody {
  annotator_id: string;
  task_id: number;
  chosen_position: number;
}

export type SubmitOutcome = "recorded" | "duplicate" | "queued";
