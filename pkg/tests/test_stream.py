import logging
import multiprocessing as mp
import os
import threading
import time

import pytest

from stressdetect.corpus import Post, post_to_json
from stressdetect.ingest import synth_generate
from stressdetect.models.persist import load_model
from stressdetect.mqlog import Record, Topic
from stressdetect.offline import score_posts
from stressdetect.stream import (
    MicroBatch,
    PredictionRecord,
    StreamError,
    StreamJobConfig,
    dedup_predictions,
    process_batch,
    read_predictions,
    run_stream_job,
    stress_summary,
)


def fixed_clock():
    return 1234


def publish_posts(root, posts, topic="posts"):
    with Topic(root, topic) as t:
        t.append_many([post_to_json(p).encode() for p in posts], [p.post_id.encode() for p in posts])


def as_records(posts):
    return [Record(i, post_to_json(p).encode(), p.post_id.encode()) for i, p in enumerate(posts)]


def job(root, artifact_path, **kw):
    kw.setdefault("trigger_interval", 10)
    kw.setdefault("stop_on_idle", 100)
    return StreamJobConfig(model_path=artifact_path, root=root, **kw)


def test_process_batch_equals_offline_scoring(artifact_path):
    art = load_model(artifact_path)
    posts = synth_generate(60, seed=4)
    res = process_batch(MicroBatch(0, as_records(posts)), art.pipeline, art.model, art.model_id, fixed_clock)
    expected = score_posts(art.pipeline, art.model, posts)
    assert [p.post_id for p in res.predictions] == [p.post_id for p in posts]
    assert [(p.predicted_label, p.score) for p in res.predictions] == [tuple(e) for e in expected]
    assert all(p.model_id == art.model_id and p.processed_at == 1234 for p in res.predictions)
    assert res.dead_letters == []


def test_process_batch_empty_and_dead_letters(artifact_path):
    art = load_model(artifact_path)
    assert process_batch([], art.pipeline, art.model, art.model_id).predictions == []
    good = post_to_json(Post("ok", "ptsd", "I feel calm")).encode()
    recs = [Record(0, b"{not json"), Record(1, good), Record(2, b'{"body": "no id"}')]
    res = process_batch(recs, art.pipeline, art.model, art.model_id, fixed_clock)
    assert [p.post_id for p in res.predictions] == ["ok"]
    assert [d.offset for d in res.dead_letters] == [0, 2]


def test_label_consistent_with_score(artifact_path):
    art = load_model(artifact_path)
    posts = synth_generate(40, seed=9)
    res = process_batch(as_records(posts), art.pipeline, art.model, art.model_id)
    for p in res.predictions:
        assert p.predicted_label == int(p.score >= 0.5)  # logistic probability


def test_prediction_wire_format():
    rec = PredictionRecord("a", 1, 0.75, "logreg-abc", 99)
    assert PredictionRecord.from_json(rec.to_json().encode()) == rec
    import json
    assert set(json.loads(rec.to_json())) == {"post_id", "predicted_label", "score", "model_id", "processed_at"}


def test_job_end_to_end_count(tmp_path, artifact_path):
    posts = synth_generate(100, seed=1)
    publish_posts(tmp_path, posts)
    summary = run_stream_job(job(tmp_path, artifact_path, max_batch=32))
    assert summary.records_ok == 100 and summary.stopped_reason == "idle"
    assert summary.batches == 4
    with Topic(tmp_path, "posts") as t:
        assert t.committed("stress-scorer") == 100
    with Topic(tmp_path, "predictions") as t:
        preds = read_predictions(t)
    assert [p.post_id for p in preds] == [p.post_id for p in posts]


def test_job_matches_batch_scoring(tmp_path, artifact_path):
    art = load_model(artifact_path)
    posts = synth_generate(80, seed=2)
    publish_posts(tmp_path, posts)
    run_stream_job(job(tmp_path, artifact_path, max_batch=7))
    with Topic(tmp_path, "predictions") as t:
        got = {p.post_id: (p.predicted_label, p.score) for p in dedup_predictions(read_predictions(t))}
    expected = {p.post_id: tuple(s) for p, s in zip(posts, score_posts(art.pipeline, art.model, posts))}
    assert got == expected


def test_zero_input_idle_exit(tmp_path, artifact_path):
    summary = run_stream_job(job(tmp_path, artifact_path, stop_on_idle=50))
    assert (summary.batches, summary.records_ok, summary.stopped_reason) == (0, 0, "idle")


def test_missing_model_is_startup_error(tmp_path):
    with pytest.raises(StreamError):
        run_stream_job(job(tmp_path, tmp_path / "missing.json"))


def test_config_invariants(tmp_path):
    with pytest.raises(ValueError):
        StreamJobConfig(model_path="m", root=tmp_path, trigger_interval=0)
    with pytest.raises(ValueError):
        StreamJobConfig(model_path="m", root=tmp_path, max_batch=0)


def test_stop_event(tmp_path, artifact_path):
    stop = threading.Event()
    stop.set()
    summary = run_stream_job(job(tmp_path, artifact_path, stop_on_idle=None), stop=stop)
    assert summary.stopped_reason == "stopped"


def _crashing_job(root, artifact_path):
    def die(batch):
        if batch.batch_id == 2:
            os._exit(17)  # output appended, offset not committed

    run_stream_job(job(root, artifact_path, max_batch=20), on_output_appended=die)


def test_crash_between_append_and_commit(tmp_path, artifact_path):
    posts = synth_generate(100, seed=3)
    publish_posts(tmp_path, posts)
    p = mp.get_context("fork").Process(target=_crashing_job, args=(str(tmp_path), str(artifact_path)))
    p.start()
    p.join(60)
    assert p.exitcode == 17
    with Topic(tmp_path, "posts") as t:
        assert t.committed("stress-scorer") == 40
    run_stream_job(job(tmp_path, artifact_path, max_batch=20))
    with Topic(tmp_path, "predictions") as t:
        raw = read_predictions(t)
    assert len(raw) == 120  # batch 2 was emitted twice
    unique = dedup_predictions(raw)
    assert len(unique) == 100
    assert {p.post_id for p in unique} == {p.post_id for p in posts}


def test_latency_within_trigger_interval(tmp_path, artifact_path):
    stop = threading.Event()
    th = threading.Thread(target=run_stream_job,
                          args=(job(tmp_path, artifact_path, trigger_interval=50, stop_on_idle=None), stop))
    th.start()
    try:
        with Topic(tmp_path, "predictions") as out, Topic(tmp_path, "posts") as inp:
            time.sleep(0.2)  # let the job go idle
            t0 = time.monotonic()
            inp.append(post_to_json(Post("late", "ptsd", "I am worried about rent")).encode())
            while out.refresh() == 0:
                assert time.monotonic() - t0 < 2.0
                time.sleep(0.002)
            elapsed = time.monotonic() - t0
    finally:
        stop.set()
        th.join(10)
    assert elapsed < 0.05 + 0.25


def rec(pid, label=1, score=0.9, model="m"):
    return PredictionRecord(pid, label, score, model, 0)


def test_dedup_examples(caplog):
    a, b = rec("a"), rec("b")
    assert dedup_predictions([a, b]) == [a, b]
    assert dedup_predictions([a, a, b]) == [a, b]
    assert dedup_predictions([rec("a", model="m1"), rec("a", model="m2")]) == [rec("a", model="m1"),
                                                                               rec("a", model="m2")]
    with caplog.at_level(logging.WARNING):
        out = dedup_predictions([rec("a", 1, 0.9), rec("a", 0, 0.1)])
    assert out == [rec("a", 1, 0.9)]
    assert "conflicting" in caplog.text


def test_stress_summary_buckets():
    preds = [rec("a", 1), rec("b", 0), rec("c", 1), rec("d", 1)]
    created = {"a": 10, "b": 3599, "c": 3600, "d": 7300}
    s = stress_summary(preds, created, bucket_seconds=3600)
    assert (s.total, s.stressed) == (4, 3)
    assert s.rate == 0.75
    assert s.buckets == [(0, 2, 1), (3600, 1, 1), (7200, 1, 1)]
    assert stress_summary([], {}).rate == 0.0
