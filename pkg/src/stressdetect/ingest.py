"""Post sources feeding the online system.

Every source follows the same small contract: ``next()`` returns the next
:class:`~stressdetect.corpus.Post` or ``None``, and once ``exhausted`` is set
``next()`` keeps returning ``None``. :func:`replay` drains a source into a
topic, optionally throttled to a fixed rate.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import CorpusError, LabeledPost, Post, post_from_json, post_to_json
from .mqlog import Topic

log = logging.getLogger(__name__)

DOMAINS = ("abuse", "social", "anxiety", "ptsd", "financial")

STRESS_WORDS = (
    "anxious panic overwhelmed worried scared afraid deadline rent debt fired crying "
    "insomnia nightmare trauma hopeless exhausted terrified lonely broke bills eviction "
    "argument yelling hurt flashback stressed pressure failing shaking dread helpless "
    "abusive threatened screaming unpaid collapse sleepless nervous tense angry trapped"
).split()

CALM_WORDS = (
    "grateful relaxed happy sunny garden recipe hiking weekend laughed coffee music "
    "movie cheerful peaceful vacation puppy beach painting celebrate proud thankful cozy "
    "reading picnic enjoyed smiled calm rested bakery festival sunset guitar knitting "
    "delicious comfy lovely adventure bright"
).split()

NEUTRAL_WORDS = (
    "today work family friend house car time week morning night school phone people "
    "thing going feel really think know said told went year month mom dad brother "
    "sister job money city street store dinner lunch boyfriend girlfriend husband wife "
    "kids dog cat class teacher boss office trip"
).split()


class SourceAdapter(Protocol):
    exhausted: bool

    def next(self) -> Post | None: ...


class ReplaySource:
    """Posts from a JSONL file, one per line. Malformed lines are skipped with
    a warning and counted in ``skipped``."""

    def __init__(self, path: str | Path, loop: bool = False):
        self.path = Path(path)
        self.loop = loop
        self.exhausted = False
        self.skipped = 0
        self._fh = open(self.path, encoding="utf-8")
        self._lineno = 0
        self._yielded_this_pass = 0

    def next(self) -> Post | None:
        while not self.exhausted:
            line = self._fh.readline()
            if not line:
                if self.loop and self._yielded_this_pass > 0:
                    self._fh.seek(0)
                    self._lineno = 0
                    self._yielded_this_pass = 0
                    continue
                self.close()
                return None
            self._lineno += 1
            if not line.strip():
                continue
            try:
                post = post_from_json(line)
            except CorpusError as exc:
                self.skipped += 1
                log.warning("%s line %d skipped: %s", self.path, self._lineno, exc)
                continue
            self._yielded_this_pass += 1
            return post
        return None

    def close(self) -> None:
        self.exhausted = True
        self._fh.close()


class SyntheticSource:
    def __init__(self, n: int, seed: int = 0, stress_ratio: float = 0.5):
        self._posts = synth_generate(n, seed, stress_ratio)
        self._i = 0
        self.exhausted = n == 0

    def next(self) -> Post | None:
        if self.exhausted:
            return None
        post = self._posts[self._i]
        self._i += 1
        if self._i >= len(self._posts):
            self.exhausted = True
        return post


class RedditSource:
    """Placeholder for a live Reddit API adapter.

    A real implementation would poll new submissions of a configured set of
    subreddits, map each to a Post (id, subreddit as domain, title + selftext
    as body, created_utc) and return ``None`` when a poll comes back empty
    within its timeout. Network access is deliberately kept out of this
    package; use :class:`ReplaySource` with a captured JSONL file instead.
    """

    exhausted = True

    def __init__(self, *args, **kwargs):
        raise NotImplementedError("live Reddit ingestion is not bundled; replay a JSONL capture")

    def next(self) -> Post | None:
        return None


def synth_labeled(n: int, seed: int = 0, stress_ratio: float = 0.5) -> list[LabeledPost]:
    """Posts whose topical words come from disjoint stress / calm pools, with a
    little cross-pool noise so the task is separable but not trivial."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if not 0.0 <= stress_ratio <= 1.0:
        raise ValueError("stress_ratio must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = int(rng.random() < stress_ratio)
        own, other = (STRESS_WORDS, CALM_WORDS) if label else (CALM_WORDS, STRESS_WORDS)
        length = int(rng.integers(10, 30))
        words = []
        for _ in range(length):
            u = rng.random()
            if u < 0.35:
                words.append(own[rng.integers(len(own))])
            elif u < 0.40:
                words.append(other[rng.integers(len(other))])
            else:
                words.append(NEUTRAL_WORDS[rng.integers(len(NEUTRAL_WORDS))])
        body = "I " + " ".join(words) + ("!" if rng.random() < 0.3 else ".")
        post = Post(
            post_id=f"synth-{i}",
            domain=DOMAINS[rng.integers(len(DOMAINS))],
            body=body,
            created_at=1_700_000_000 + 37 * i,
        )
        out.append(LabeledPost(post, label))
    return out


def synth_generate(n: int, seed: int = 0, stress_ratio: float = 0.5) -> list[Post]:
    return [lp.post for lp in synth_labeled(n, seed, stress_ratio)]


@dataclass
class ReplayConfig:
    path: str | Path
    rate: float | None = None  # posts per second; None means unthrottled
    loop: bool = False

    def __post_init__(self):
        if self.rate is not None and not self.rate > 0:
            raise ValueError("rate must be > 0 when throttled")


@dataclass
class ReplaySummary:
    appended: int
    skipped: int
    seconds: float


def publish(source: SourceAdapter, topic: Topic, rate: float | None = None,
            stop: threading.Event | None = None, limit: int | None = None,
            chunk: int = 256) -> int:
    """Drain ``source`` into ``topic``; post ``i`` is appended no earlier than
    ``i / rate`` seconds after start and the call returns no earlier than
    ``count / rate`` seconds after start."""
    t0 = time.monotonic()
    count = 0
    pending: list[Post] = []

    def flush_pending():
        if pending:
            topic.append_many([post_to_json(p).encode("utf-8") for p in pending],
                              [p.post_id.encode("utf-8") for p in pending])
            pending.clear()

    while limit is None or count < limit:
        if stop is not None and stop.is_set():
            break
        post = source.next()
        if post is None:
            break
        if rate is None:
            pending.append(post)
            if len(pending) >= chunk:
                flush_pending()
        else:
            delay = t0 + count / rate - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            topic.append(post_to_json(post).encode("utf-8"), post.post_id.encode("utf-8"))
        count += 1
    flush_pending()
    if rate is not None and count:
        delay = t0 + count / rate - time.monotonic()
        if delay > 0:
            time.sleep(delay)
    return count


def replay(cfg: ReplayConfig, topic: Topic, stop: threading.Event | None = None,
           limit: int | None = None) -> ReplaySummary:
    t0 = time.monotonic()
    source = ReplaySource(cfg.path, loop=cfg.loop)
    try:
        n = publish(source, topic, cfg.rate, stop, limit)
    finally:
        if not source.exhausted:
            source.close()
    return ReplaySummary(n, source.skipped, time.monotonic() - t0)
