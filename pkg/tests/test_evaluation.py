import json

import numpy as np
import pytest

from memegenres.evaluation import (
    AnnotatorSession,
    ImpostorTask,
    Response,
    assemble_sessions,
    generate_tasks,
    load_roster,
    load_tasks,
    make_controls,
    parse_response_log,
    format_response_line,
    qualify_annotators,
    response_accuracy,
    save_roster,
    save_tasks,
    score,
    simulate_random_annotator,
)
from memegenres.spectral import ClusterAssignment


def _assignment(sizes: dict[int, int], K: int, overflow: int = 0) -> ClusterAssignment:
    assignments = {}
    img = 0
    for c, n in sizes.items():
        for _ in range(n):
            assignments[img] = c
            img += 1
    for _ in range(overflow):
        assignments[img] = K
        img += 1
    return ClusterAssignment(assignments=assignments, K=K, centroid_inertia=0.0)


# ------------------------------------------------------------------- tasks


def test_task_validation():
    with pytest.raises(ValueError, match="impostor_position"):
        ImpostorTask(0, 0, (1, 2, 3, 4), 9, impostor_position=6)
    with pytest.raises(ValueError, match="distinct"):
        ImpostorTask(0, 0, (1, 1, 3, 4), 9, impostor_position=2)
    with pytest.raises(ValueError, match="differ from hosts"):
        ImpostorTask(0, 0, (1, 2, 3, 4), 3, impostor_position=2)
    with pytest.raises(ValueError, match="control answer"):
        ImpostorTask(0, -1, (1, 1, 1, 1), 2, 3, is_control=True, control_answer=1)


def test_task_slots_places_impostor():
    t = ImpostorTask(0, 0, (10, 11, 12, 13), 99, impostor_position=2)
    assert t.slots() == (10, 99, 11, 12, 13)
    t5 = ImpostorTask(1, 0, (10, 11, 12, 13), 99, impostor_position=5)
    assert t5.slots() == (10, 11, 12, 13, 99)


def test_generate_tasks_structure_and_determinism():
    asg = _assignment({0: 10, 1: 6, 2: 3}, K=3, overflow=5)
    tasks, skipped = generate_tasks(asg, tasks_per_cluster=25, seed=5)
    # cluster 2 is too small to host; overflow never participates at all
    assert skipped == [(2, 3)]
    assert len(tasks) == 2 * 25
    members = {0: set(range(10)), 1: set(range(10, 16)), 2: set(range(16, 19))}
    overflow_ids = set(range(19, 24))
    for t in tasks:
        assert set(t.host_images) <= members[t.host_cluster]
        assert t.impostor_image not in members[t.host_cluster]
        assert t.impostor_image not in overflow_ids
        assert not t.is_control
    assert [t.task_id for t in tasks] == list(range(50))
    again, _ = generate_tasks(asg, tasks_per_cluster=25, seed=5)
    assert again == tasks


def test_generate_tasks_impostors_can_come_from_small_clusters():
    # too-small clusters cannot host, but their images stay in the impostor pool
    asg = _assignment({0: 30, 1: 3}, K=2)
    tasks, skipped = generate_tasks(asg, tasks_per_cluster=200, seed=1)
    assert skipped == [(1, 3)]
    impostors = {t.impostor_image for t in tasks}
    assert impostors <= set(range(30, 33))


def test_generate_tasks_needs_two_clusters():
    with pytest.raises(ValueError, match="at least 2"):
        generate_tasks(_assignment({0: 10}, K=1), tasks_per_cluster=5)


def test_make_controls_shape():
    ctl = make_controls([3, 7, 20, 21], count=5, seed=2)
    assert len(ctl) == 5
    assert [t.task_id for t in ctl] == [10_000_000 + i for i in range(5)]
    for t in ctl:
        assert t.is_control
        assert len(set(t.host_images)) == 1
        assert t.impostor_image != t.host_images[0]
        assert t.control_answer == t.impostor_position
    with pytest.raises(ValueError, match="at least 2"):
        make_controls([5], count=1)


# ------------------------------------------------------ sessions + controls


def _mini_tasks():
    real = [
        ImpostorTask(i, 0, (1, 2, 3, 4), 90 + i, impostor_position=1 + i % 5)
        for i in range(4)
    ]
    controls = make_controls([1, 2, 3, 4], count=3, seed=0)
    return real, controls


def test_assemble_sessions_groups_and_dedupes():
    real, controls = _mini_tasks()
    tasks = real + controls
    responses = [
        Response("alice", 0, 2),
        Response("alice", 0, 5),  # duplicate answer: first one wins
        Response("bob", 1, 3),
        Response("alice", controls[0].task_id, controls[0].control_answer),
    ]
    sessions = assemble_sessions(tasks, responses)
    assert [s.annotator_id for s in sessions] == ["alice", "bob"]
    alice = sessions[0]
    assert alice.responses[0] == 2
    assert len(alice.tasks) == 2
    with pytest.raises(ValueError, match="unknown task"):
        assemble_sessions(tasks, [Response("x", 555, 1)])


def test_roster_makes_unanswered_controls_count():
    real, controls = _mini_tasks()
    tasks = real + controls
    roster = {"carol": [0, 1, controls[0].task_id, controls[1].task_id]}
    # carol answered nothing at all
    sessions = assemble_sessions(tasks, [], roster=roster)
    assert len(sessions) == 1
    assert sessions[0].control_misses() == 2


def test_qualification_rule():
    real, controls = _mini_tasks()
    ok = AnnotatorSession(
        "good",
        tasks=real + controls,
        responses={c.task_id: c.control_answer for c in controls},
    )
    one_miss = AnnotatorSession(
        "meh",
        tasks=real + controls,
        responses={
            controls[0].task_id: controls[0].control_answer,
            controls[1].task_id: controls[1].control_answer,
            controls[2].task_id: (controls[2].control_answer % 5) + 1,
        },
    )
    two_miss = AnnotatorSession(
        "bad",
        tasks=real + controls,
        responses={controls[0].task_id: controls[0].control_answer},
    )
    qualified, discarded = qualify_annotators([ok, one_miss, two_miss])
    assert [s.annotator_id for s in qualified] == ["good", "meh"]
    assert [s.annotator_id for s in discarded] == ["bad"]
    assert ok.qualified and one_miss.qualified and not two_miss.qualified


# ------------------------------------------------------------------ scoring


def _answer(tasks, n_correct, annotator="a"):
    """Responses answering the first n_correct tasks right, the rest wrong."""
    out = []
    for i, t in enumerate(tasks):
        pos = t.impostor_position if i < n_correct else (t.impostor_position % 5) + 1
        out.append(Response(annotator, t.task_id, pos))
    return out


def test_score_reproduces_hand_computed_toy():
    # two clusters holding 90% / 10% of images, accuracies 0.3 / 0.9:
    # plain average (0.3 + 0.9) / 2 = 0.60, weighted 0.9*0.3 + 0.1*0.9 = 0.36
    asg = _assignment({0: 90, 1: 10}, K=2)
    tasks, _ = generate_tasks(asg, tasks_per_cluster=10, seed=0)
    t0 = [t for t in tasks if t.host_cluster == 0]
    t1 = [t for t in tasks if t.host_cluster == 1]
    responses = _answer(t0, 3) + _answer(t1, 9)
    report = score(tasks, responses, asg)
    assert report.defined
    assert report.acc == {0: 3 / 10, 1: 9 / 10}
    assert report.p == {0: 0.9, 1: 0.1}
    assert report.avg_accuracy == (0.3 + 0.9) / 2
    assert report.normalized_avg_accuracy == 0.9 * 0.3 + 0.1 * 0.9
    assert report.normalized_delta == report.avg_accuracy - report.normalized_avg_accuracy
    assert report.n_responses == 20 and report.n_correct == 12


def test_score_reproduces_published_delta_arithmetic():
    # inject per-cluster accuracies whose plain and weighted averages land on
    # 62.42 and 57.25, so the delta reproduces 62.42 - 57.25 = 5.17
    asg = _assignment({0: 3530, 1: 6470}, K=2)
    tasks, _ = generate_tasks(asg, tasks_per_cluster=10_000, seed=0)
    t0 = [t for t in tasks if t.host_cluster == 0]
    t1 = [t for t in tasks if t.host_cluster == 1]
    responses = _answer(t0, 8000) + _answer(t1, 4484)
    report = score(tasks, responses, asg)
    assert report.avg_accuracy * 100 == pytest.approx(62.42, abs=1e-9)
    assert report.normalized_avg_accuracy * 100 == pytest.approx(57.25, abs=0.01)
    assert report.normalized_delta * 100 == pytest.approx(5.17, abs=0.01)


def test_score_ignores_controls_and_duplicate_answers():
    asg = _assignment({0: 5, 1: 5}, K=2)
    tasks, _ = generate_tasks(asg, tasks_per_cluster=4, seed=1)
    controls = make_controls(list(range(10)), count=2, seed=1)
    everything = tasks + controls
    responses = _answer(tasks, len(tasks))
    responses += [Response("a", tasks[0].task_id, (tasks[0].impostor_position % 5) + 1)]
    responses += [Response("a", c.task_id, c.control_answer) for c in controls]
    report = score(everything, responses, asg)
    assert report.n_responses == len(tasks)  # dupes and controls not double-counted
    assert report.n_correct == len(tasks)
    assert report.avg_accuracy == 1.0


def test_score_unknown_task_raises():
    asg = _assignment({0: 5, 1: 5}, K=2)
    tasks, _ = generate_tasks(asg, tasks_per_cluster=4, seed=1)
    with pytest.raises(ValueError, match="unknown task"):
        score(tasks, [Response("a", 424242, 1)], asg)


def test_score_with_no_responses_is_undefined_but_serializable():
    asg = _assignment({0: 5, 1: 5}, K=2)
    tasks, _ = generate_tasks(asg, tasks_per_cluster=4, seed=1)
    report = score(tasks, [], asg)
    assert not report.defined
    assert report.avg_accuracy != report.avg_accuracy  # NaN
    assert report.clusters_without_responses == [0, 1]
    blob = json.dumps(report.to_json())
    assert json.loads(blob)["avg_accuracy"] is None


def test_random_annotator_calibrates_to_one_fifth():
    asg = _assignment({0: 20, 1: 20, 2: 20}, K=3)
    tasks, _ = generate_tasks(asg, tasks_per_cluster=2000, seed=3)
    responses = simulate_random_annotator(tasks, seed=11)
    acc = response_accuracy(tasks, responses)
    assert acc == pytest.approx(0.2, abs=0.02)
    with pytest.raises(ValueError, match="no tasks"):
        simulate_random_annotator([])
    with pytest.raises(ValueError, match="no responses"):
        response_accuracy(tasks, [])


# -------------------------------------------------------------- persistence


def test_task_file_round_trip(tmp_path):
    asg = _assignment({0: 6, 1: 6}, K=2)
    tasks, _ = generate_tasks(asg, tasks_per_cluster=3, seed=2)
    tasks += make_controls(list(range(12)), count=2, seed=2)
    path = tmp_path / "tasks.jsonl"
    save_tasks(tasks, path)
    assert load_tasks(path) == tasks


def test_response_log_round_trip(tmp_path):
    responses = [Response("ann-1", 3, 2, 123.5), Response("ann-2", 7, 5, 124.0)]
    path = tmp_path / "responses.csv"
    path.write_text("".join(format_response_line(r) for r in responses))
    back = parse_response_log(path)
    assert [(r.annotator_id, r.task_id, r.chosen_position) for r in back] == [
        ("ann-1", 3, 2),
        ("ann-2", 7, 5),
    ]
    bad = tmp_path / "bad.csv"
    bad.write_text("only,three,fields\n")
    with pytest.raises(ValueError, match="malformed"):
        parse_response_log(bad)


def test_roster_round_trip(tmp_path):
    roster = {"a": [1, 2, 3], "b": [9]}
    path = tmp_path / "roster.jsonl"
    save_roster(roster, path)
    assert load_roster(path) == roster
