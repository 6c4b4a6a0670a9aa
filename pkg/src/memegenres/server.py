"""HTTP API for running the impostor-host experiment with live annotators.

Serves 25-task sessions (20 real tasks + 5 synthesized controls, shuffled),
corpus images, and the aggregate report. All state lives in plain files under
one evaluation directory, so the server can restart without losing anything
and the scorer can run offline on the same files:

    tasks.jsonl     real tasks (written by task generation)
    controls.jsonl  control tasks, appended as sessions are created
    sessions.jsonl  annotator id -> the 25 task ids of their session
    responses.log   append-only `annotator_id,task_id,chosen_position,timestamp`

Response writes are serialized under a lock and idempotent per
(annotator, task): a duplicate submission returns 409 and is not re-counted.
"""
from __future__ import annotations

import json
import mimetypes
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, JSONResponse, Response as HttpResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .evaluation import (
    CONTROL_ID_BASE,
    SESSION_CONTROLS,
    SESSION_TASKS,
    ImpostorTask,
    Response as EvalResponse,
    assemble_sessions,
    format_response_line,
    load_roster,
    load_tasks,
    make_controls,
    parse_response_log,
    qualify_annotators,
    score,
    task_to_json,
)
from .spectral import ClusterAssignment

REAL_TASKS_PER_SESSION = SESSION_TASKS - SESSION_CONTROLS


class ResponseBody(BaseModel):
    annotator_id: str = Field(min_length=1, max_length=128)
    task_id: int
    chosen_position: int = Field(ge=1, le=5)


class EvalState:
    """File-backed experiment state shared across requests."""

    def __init__(
        self,
        eval_dir: str | Path,
        image_paths: dict[int, str | Path],
        assignment: ClusterAssignment,
        seed: int = 0,
    ):
        self.dir = Path(eval_dir)
        self.image_paths = {int(k): Path(v) for k, v in image_paths.items()}
        self.assignment = assignment
        self.seed = seed
        self.lock = threading.Lock()

        self.tasks_path = self.dir / "tasks.jsonl"
        self.controls_path = self.dir / "controls.jsonl"
        self.sessions_path = self.dir / "sessions.jsonl"
        self.responses_path = self.dir / "responses.log"

        self.real_tasks = load_tasks(self.tasks_path)
        if not self.real_tasks:
            raise ValueError(f"no tasks in {self.tasks_path}")
        self.tasks: dict[int, ImpostorTask] = {t.task_id: t for t in self.real_tasks}
        if self.controls_path.exists():
            for t in load_tasks(self.controls_path):
                self.tasks[t.task_id] = t

        self.roster: dict[str, list[int]] = (
            load_roster(self.sessions_path) if self.sessions_path.exists() else {}
        )
        self.answers: dict[tuple[str, int], int] = {}
        if self.responses_path.exists():
            for r in parse_response_log(self.responses_path):
                self.answers.setdefault((r.annotator_id, r.task_id), r.chosen_position)

        self.serve_counts: dict[int, int] = {t.task_id: 0 for t in self.real_tasks}
        n_controls = 0
        for ids in self.roster.values():
            for tid in ids:
                if tid >= CONTROL_ID_BASE:
                    n_controls += 1
                elif tid in self.serve_counts:
                    self.serve_counts[tid] += 1
        self.control_counter = n_controls
        self.session_counter = len(self.roster)

    # -- session assembly ---------------------------------------------------

    def new_session(self) -> tuple[str, list[int]]:
        with self.lock:
            self.session_counter += 1
            aid = f"ann-{self.session_counter:06d}"
            while aid in self.roster:
                self.session_counter += 1
                aid = f"ann-{self.session_counter:06d}"
            # least-served real tasks first keeps coverage even across annotators
            order = sorted(self.serve_counts, key=lambda t: (self.serve_counts[t], t))
            real = order[:REAL_TASKS_PER_SESSION]
            for tid in real:
                self.serve_counts[tid] += 1
            controls = make_controls(
                sorted(self.image_paths),
                SESSION_CONTROLS,
                seed=self.seed + self.control_counter,
                id_start=CONTROL_ID_BASE + self.control_counter,
            )
            self.control_counter += len(controls)
            with open(self.controls_path, "a") as fh:
                for t in controls:
                    fh.write(json.dumps(task_to_json(t), sort_keys=True) + "\n")
            for t in controls:
                self.tasks[t.task_id] = t

            ids = real + [t.task_id for t in controls]
            rng = np.random.default_rng(
                np.random.SeedSequence([self.seed, 0x5E55, self.session_counter])
            )
            rng.shuffle(ids)
            ids = [int(t) for t in ids]
            self.roster[aid] = ids
            with open(self.sessions_path, "a") as fh:
                fh.write(json.dumps({"annotator_id": aid, "task_ids": ids}) + "\n")
            return aid, ids

    def record(self, aid: str, task_id: int, position: int) -> int:
        """Append one response; returns an HTTP-ish status (200/404/409)."""
        with self.lock:
            if aid not in self.roster:
                return 404
            if task_id not in self.roster[aid]:
                return 404
            key = (aid, task_id)
            if key in self.answers:
                return 409
            self.answers[key] = position
            line = format_response_line(
                EvalResponse(aid, task_id, position, time.time())
            )
            with open(self.responses_path, "a") as fh:
                fh.write(line)
                fh.flush()
            return 200

    def session_view(self, aid: str) -> dict:
        ids = self.roster[aid]
        tasks = []
        for tid in ids:
            t = self.tasks[tid]
            tasks.append(
                {
                    "task_id": tid,
                    "images": [f"/api/image/{img}" for img in t.slots()],
                    "answered": self.answers.get((aid, tid)),
                }
            )
        return {"annotator_id": aid, "tasks": tasks}

    def report(self) -> dict:
        responses = [
            EvalResponse(aid, tid, pos)
            for (aid, tid), pos in sorted(self.answers.items())
        ]
        all_tasks = list(self.tasks.values())
        sessions = assemble_sessions(all_tasks, responses, roster=self.roster)
        qualified, discarded = qualify_annotators(sessions)
        q_names = {s.annotator_id for s in qualified}
        scored = [r for r in responses if r.annotator_id in q_names]
        rep = score(all_tasks, scored, self.assignment)
        doc = rep.to_json()
        doc["n_sessions"] = len(sessions)
        doc["n_qualified"] = len(qualified)
        doc["n_discarded"] = len(discarded)
        doc["discarded_annotators"] = sorted(s.annotator_id for s in discarded)
        return doc


def create_app(
    eval_dir: str | Path,
    image_paths: dict[int, str | Path],
    assignment: ClusterAssignment,
    seed: int = 0,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    state = EvalState(eval_dir, image_paths, assignment, seed=seed)
    app = FastAPI(title="impostor-host evaluation")
    app.state.eval = state

    @app.get("/api/session")
    def get_session(annotator_id: str | None = None):
        if annotator_id is not None:
            if annotator_id not in state.roster:
                raise HTTPException(404, "unknown annotator")
            return state.session_view(annotator_id)  # resume, not duplicate
        aid, _ = state.new_session()
        return state.session_view(aid)

    @app.get("/api/image/{image_id}")
    def get_image(image_id: int):
        path = state.image_paths.get(image_id)
        if path is None or not path.exists():
            raise HTTPException(404, "unknown image")
        media = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        return HttpResponse(content=path.read_bytes(), media_type=media)

    @app.post("/api/response")
    def post_response(body: ResponseBody):
        status = state.record(body.annotator_id, body.task_id, body.chosen_position)
        if status == 404:
            raise HTTPException(404, "unknown annotator or task not in session")
        if status == 409:
            raise HTTPException(409, "response already recorded")
        return {"status": "ok"}

    @app.get("/api/report")
    def get_report():
        return JSONResponse(state.report())

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/")
        def index():
            return HTMLResponse(
                "<!doctype html><title>eval API</title>"
                "<p>Evaluation API is running. Endpoints: /api/session, "
                "/api/image/{id}, /api/response, /api/report.</p>"
            )

    return app
