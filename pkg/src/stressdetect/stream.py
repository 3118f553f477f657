"""Micro-batch scoring job: posts topic in, predictions topic out.

Each trigger reads up to ``max_batch`` records from the group's committed
offset, scores them, appends one JSON prediction per post to the output
topic and only then commits the input offset. A crash between the output
append and the commit replays that batch on restart, so delivery is
at-least-once; :func:`dedup_predictions` removes the duplicates.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import CorpusError, post_from_json
from .features import FeatureError, FeaturePipeline
from .models import Classifier, ModelError
from .models.persist import load_model
from .mqlog import LogError, Record, Topic

log = logging.getLogger(__name__)


class StreamError(RuntimeError):
    pass


def now_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass
class StreamJobConfig:
    model_path: str | Path
    root: str | Path
    input_topic: str = "posts"
    output_topic: str = "predictions"
    group: str = "stress-scorer"
    trigger_interval: int = 1000  # ms
    max_batch: int = 512
    stop_on_idle: int | None = None  # ms of idleness before a clean exit

    def __post_init__(self):
        if self.trigger_interval < 1:
            raise ValueError("trigger_interval must be >= 1 ms")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


@dataclass(frozen=True)
class MicroBatch:
    batch_id: int
    records: list[Record]

    @property
    def first_offset(self) -> int:
        return self.records[0].offset

    @property
    def last_offset(self) -> int:
        return self.records[-1].offset


@dataclass(frozen=True)
class PredictionRecord:
    post_id: str
    predicted_label: int
    score: float
    model_id: str
    processed_at: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), allow_nan=False, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str | bytes) -> "PredictionRecord":
        d = json.loads(text)
        return cls(str(d["post_id"]), int(d["predicted_label"]), float(d["score"]),
                   str(d["model_id"]), int(d["processed_at"]))


@dataclass
class DeadLetter:
    offset: int
    error: str


@dataclass
class BatchResult:
    predictions: list[PredictionRecord] = field(default_factory=list)
    dead_letters: list[DeadLetter] = field(default_factory=list)


def process_batch(batch: MicroBatch | Sequence[Record], pipeline: FeaturePipeline,
                  model: Classifier, model_id: str,
                  clock: Callable[[], int] = now_ms) -> BatchResult:
    records = batch.records if isinstance(batch, MicroBatch) else batch
    result = BatchResult()
    for rec in records:
        try:
            post = post_from_json(rec.payload)
            x = pipeline.transform(post)
        except (CorpusError, FeatureError, KeyError) as exc:
            # undecodable, or missing a field the pipeline needs (e.g. an aux column)
            result.dead_letters.append(DeadLetter(rec.offset, str(exc)))
            continue
        label, score = model.predict_one(x)
        result.predictions.append(PredictionRecord(post.post_id, label, score, model_id, clock()))
    return result


@dataclass
class RunSummary:
    batches: int = 0
    records_ok: int = 0
    records_dead: int = 0
    stopped_reason: str = ""
    committed_offset: int = 0


def run_stream_job(cfg: StreamJobConfig, stop: threading.Event | None = None,
                   on_output_appended: Callable[[MicroBatch], None] | None = None,
                   clock: Callable[[], int] = now_ms) -> RunSummary:
    """Run until ``stop`` is set or the input has been idle for ``stop_on_idle``.

    ``on_output_appended`` runs after a batch's predictions are durable and
    before its offset is committed (fault-injection point for tests).
    """
    try:
        artifact = load_model(cfg.model_path)
    except (ModelError, OSError) as exc:
        raise StreamError(f"cannot load model {cfg.model_path}: {exc}") from exc
    stop = stop or threading.Event()
    summary = RunSummary()
    inp = Topic(cfg.root, cfg.input_topic)
    out = Topic(cfg.root, cfg.output_topic)
    try:
        offset = inp.committed(cfg.group)
        summary.committed_offset = offset
        idle_since: float | None = None
        while True:
            if stop.is_set():
                summary.stopped_reason = "stopped"
                break
            records = inp.read(offset, cfg.max_batch)
            if records:
                idle_since = None
                batch = MicroBatch(summary.batches, records)
                result = process_batch(batch, artifact.pipeline, artifact.model,
                                       artifact.model_id, clock)
                out.append_many([p.to_json().encode("utf-8") for p in result.predictions],
                                [p.post_id.encode("utf-8") for p in result.predictions])
                if on_output_appended is not None:
                    on_output_appended(batch)
                offset = batch.last_offset + 1
                inp.commit(cfg.group, offset)
                for dl in result.dead_letters:
                    log.warning("dead letter at offset %d: %s", dl.offset, dl.error)
                summary.batches += 1
                summary.records_ok += len(result.predictions)
                summary.records_dead += len(result.dead_letters)
                summary.committed_offset = offset
                continue
            now = time.monotonic()
            if idle_since is None:
                idle_since = now
            wait = cfg.trigger_interval / 1000.0
            if cfg.stop_on_idle is not None:
                remaining = cfg.stop_on_idle / 1000.0 - (now - idle_since)
                if remaining <= 0:
                    summary.stopped_reason = "idle"
                    break
                wait = min(wait, remaining)
            stop.wait(wait)
    except LogError as exc:
        summary.stopped_reason = f"error: {exc}"
        raise StreamError(f"storage failure: {exc}") from exc
    finally:
        inp.close()
        out.close()
    return summary


def read_predictions(topic: Topic) -> list[PredictionRecord]:
    return [PredictionRecord.from_json(r.payload) for r in topic]


def dedup_predictions(records: Iterable[PredictionRecord]) -> list[PredictionRecord]:
    seen: dict[tuple[str, str], PredictionRecord] = {}
    out = []
    for rec in records:
        key = (rec.post_id, rec.model_id)
        first = seen.get(key)
        if first is None:
            seen[key] = rec
            out.append(rec)
        elif (first.predicted_label, first.score) != (rec.predicted_label, rec.score):
            log.warning("conflicting duplicate prediction for %s (%s); keeping the first",
                        rec.post_id, rec.model_id)
    return out


@dataclass
class StressSummary:
    total: int
    stressed: int
    buckets: list[tuple[int, int, int]]  # (bucket_start, total, stressed)

    @property
    def rate(self) -> float:
        return self.stressed / self.total if self.total else 0.0


def stress_summary(predictions: Sequence[PredictionRecord], created_at: dict[str, int],
                   bucket_seconds: int = 3600) -> StressSummary:
    """Share of posts predicted stressed, overall and per time bucket of the
    post's ``created_at``."""
    counts: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for p in predictions:
        ts = created_at.get(p.post_id, 0)
        bucket = ts - ts % bucket_seconds
        counts[bucket][0] += 1
        counts[bucket][1] += p.predicted_label
    buckets = [(b, c[0], c[1]) for b, c in sorted(counts.items())]
    stressed = sum(p.predicted_label for p in predictions)
    return StressSummary(len(predictions), stressed, buckets)
