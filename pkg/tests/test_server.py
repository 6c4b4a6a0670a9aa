import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from memegenres.evaluation import CONTROL_ID_BASE, generate_tasks, load_tasks, save_tasks
from memegenres.server import create_app
from memegenres.spectral import ClusterAssignment

N_IMAGES = 20


@pytest.fixture()
def setup(tmp_path):
    rng = np.random.default_rng(0)
    image_paths = {}
    for i in range(N_IMAGES):
        p = tmp_path / f"img{i:03d}.png"
        Image.fromarray(rng.integers(0, 255, size=(24, 24), dtype=np.uint8)).save(p)
        image_paths[i] = p
    assignment = ClusterAssignment(
        assignments={i: 0 if i < 10 else 1 for i in range(N_IMAGES)},
        K=2,
        centroid_inertia=0.0,
    )
    tasks, _ = generate_tasks(assignment, tasks_per_cluster=20, seed=1)  # 40 real tasks
    eval_dir = tmp_path / "eval"
    eval_dir.mkdir()
    save_tasks(tasks, eval_dir / "tasks.jsonl")
    return eval_dir, image_paths, assignment


def _client(setup):
    eval_dir, image_paths, assignment = setup
    return TestClient(create_app(eval_dir, image_paths, assignment, seed=3))


def _answers(eval_dir):
    """task_id -> correct position, for real tasks and synthesized controls."""
    out = {}
    for name in ("tasks.jsonl", "controls.jsonl"):
        p = eval_dir / name
        if p.exists():
            for t in load_tasks(p):
                out[t.task_id] = t.impostor_position
    return out


# ------------------------------------------------------------- sessions


def test_new_session_is_25_tasks_with_5_controls(setup):
    eval_dir, _, _ = setup
    client = _client(setup)
    r = client.get("/api/session")
    assert r.status_code == 200
    doc = r.json()
    assert doc["annotator_id"] == "ann-000001"
    assert len(doc["tasks"]) == 25
    ids = [t["task_id"] for t in doc["tasks"]]
    controls = [t for t in ids if t >= CONTROL_ID_BASE]
    assert len(controls) == 5
    assert all(len(t["images"]) == 5 for t in doc["tasks"])
    assert all(t["answered"] is None for t in doc["tasks"])
    # controls are persisted so scoring sees them too
    assert (eval_dir / "controls.jsonl").exists()
    assert (eval_dir / "sessions.jsonl").exists()
    # controls are interleaved, not appended as a visible block at the end
    assert ids[-5:] != controls


def test_session_resume_returns_same_tasks(setup):
    client = _client(setup)
    first = client.get("/api/session").json()
    again = client.get("/api/session", params={"annotator_id": first["annotator_id"]}).json()
    assert [t["task_id"] for t in again["tasks"]] == [t["task_id"] for t in first["tasks"]]
    assert client.get("/api/session", params={"annotator_id": "ghost"}).status_code == 404


def test_two_sessions_cover_disjoint_least_served_tasks(setup):
    client = _client(setup)
    a = client.get("/api/session").json()
    b = client.get("/api/session").json()
    real_a = {t["task_id"] for t in a["tasks"] if t["task_id"] < CONTROL_ID_BASE}
    real_b = {t["task_id"] for t in b["tasks"] if t["task_id"] < CONTROL_ID_BASE}
    assert len(real_a) == 20 and len(real_b) == 20
    assert real_a.isdisjoint(real_b)  # 40 real tasks: each session gets a fresh half
    ctl_a = {t["task_id"] for t in a["tasks"]} - real_a
    ctl_b = {t["task_id"] for t in b["tasks"]} - real_b
    assert ctl_a.isdisjoint(ctl_b)  # controls are freshly synthesized per session


# --------------------------------------------------------------- images


def test_image_endpoint(setup):
    client = _client(setup)
    r = client.get("/api/image/3")
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert r.content[:8] == b"\x89PNG\r\n\x1a\n"
    assert client.get("/api/image/999").status_code == 404


# ------------------------------------------------------------- responses


def test_response_recording_and_conflicts(setup):
    eval_dir, _, _ = setup
    client = _client(setup)
    doc = client.get("/api/session").json()
    aid = doc["annotator_id"]
    tid = doc["tasks"][0]["task_id"]

    ok = client.post(
        "/api/response",
        json={"annotator_id": aid, "task_id": tid, "chosen_position": 2},
    )
    assert ok.status_code == 200
    dup = client.post(
        "/api/response",
        json={"annotator_id": aid, "task_id": tid, "chosen_position": 4},
    )
    assert dup.status_code == 409
    # task outside the session, unknown annotator, bad position
    outside = [t.task_id for t in load_tasks(eval_dir / "tasks.jsonl")
               if t.task_id not in {x["task_id"] for x in doc["tasks"]}][0]
    assert client.post(
        "/api/response", json={"annotator_id": aid, "task_id": outside, "chosen_position": 1}
    ).status_code == 404
    assert client.post(
        "/api/response", json={"annotator_id": "ghost", "task_id": tid, "chosen_position": 1}
    ).status_code == 404
    assert client.post(
        "/api/response", json={"annotator_id": aid, "task_id": tid, "chosen_position": 6}
    ).status_code == 422
    # the answer shows up in the session view and on disk
    view = client.get("/api/session", params={"annotator_id": aid}).json()
    assert {t["task_id"]: t["answered"] for t in view["tasks"]}[tid] == 2
    assert (eval_dir / "responses.log").read_text().count("\n") == 1


def test_state_survives_restart(setup):
    eval_dir, image_paths, assignment = setup
    client = _client(setup)
    doc = client.get("/api/session").json()
    aid = doc["annotator_id"]
    tid = doc["tasks"][0]["task_id"]
    client.post("/api/response", json={"annotator_id": aid, "task_id": tid, "chosen_position": 1})

    reborn = TestClient(create_app(eval_dir, image_paths, assignment, seed=3))
    # same session resumes with the recorded answer
    view = reborn.get("/api/session", params={"annotator_id": aid}).json()
    assert {t["task_id"]: t["answered"] for t in view["tasks"]}[tid] == 1
    # the duplicate is still refused after restart
    dup = reborn.post(
        "/api/response", json={"annotator_id": aid, "task_id": tid, "chosen_position": 3}
    )
    assert dup.status_code == 409
    # a fresh session continues the least-served rotation instead of repeating
    fresh = reborn.get("/api/session").json()
    real_old = {t["task_id"] for t in doc["tasks"] if t["task_id"] < CONTROL_ID_BASE}
    real_new = {t["task_id"] for t in fresh["tasks"] if t["task_id"] < CONTROL_ID_BASE}
    assert real_old.isdisjoint(real_new)


def test_create_app_requires_tasks(tmp_path):
    empty = tmp_path / "empty_eval"
    empty.mkdir()
    (empty / "tasks.jsonl").write_text("")
    with pytest.raises((ValueError, FileNotFoundError)):
        create_app(empty, {}, ClusterAssignment({0: 0}, K=1, centroid_inertia=0.0))


# ---------------------------------------------------------------- report


def _run_session(client, eval_dir, correct_controls=5, correct_real=999):
    """Answer one full session; returns annotator id."""
    doc = client.get("/api/session").json()
    answers = _answers(eval_dir)  # after session creation: controls now on disk
    aid = doc["annotator_id"]
    n_ctl = n_real = 0
    for t in doc["tasks"]:
        tid = t["task_id"]
        truth = answers[tid]
        if tid >= CONTROL_ID_BASE:
            n_ctl += 1
            pos = truth if n_ctl <= correct_controls else (truth % 5) + 1
        else:
            n_real += 1
            pos = truth if n_real <= correct_real else (truth % 5) + 1
        r = client.post(
            "/api/response",
            json={"annotator_id": aid, "task_id": tid, "chosen_position": pos},
        )
        assert r.status_code == 200
    return aid


def test_report_scores_qualified_sessions_only(setup):
    eval_dir, _, _ = setup
    client = _client(setup)
    good = _run_session(client, eval_dir)                         # all correct
    cheat = _run_session(client, eval_dir, correct_controls=3)    # 2 control misses

    report = client.get("/api/report").json()
    assert report["n_sessions"] == 2
    assert report["n_qualified"] == 1
    assert report["n_discarded"] == 1
    assert report["discarded_annotators"] == [cheat]
    assert report["defined"]
    # only the good annotator's 20 real answers are scored, all correct
    assert report["n_responses"] == 20
    assert report["avg_accuracy"] == 1.0


def test_report_before_any_responses_is_undefined(setup):
    client = _client(setup)
    report = client.get("/api/report").json()
    assert report["n_sessions"] == 0
    assert not report["defined"]
    assert report["avg_accuracy"] is None


def test_root_serves_placeholder_without_ui(setup):
    client = _client(setup)
    r = client.get("/")
    assert r.status_code == 200
    assert "Evaluation API" in r.text


def test_root_serves_static_ui_when_given(setup, tmp_path):
    eval_dir, image_paths, assignment = setup
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<!doctype html><title>annotator</title><h1>hello</h1>")
    client = TestClient(create_app(eval_dir, image_paths, assignment, seed=3, ui_dir=ui))
    r = client.get("/")
    assert r.status_code == 200
    assert "annotator" in r.text
