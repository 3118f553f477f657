"""Text normalization for social-media posts.

The pipeline is fixed as ``clean -> tokenize -> remove_stopwords``:

* ``clean`` strips URLs, Reddit ``u/`` and ``r/`` references and HTML
  entities, then turns every other non-alphanumeric character into a space.
* ``tokenize`` lowercases and keeps alphanumeric runs of length >= 2 that are
  not purely numeric.
* ``remove_stopwords`` drops tokens found in the active stopword list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
# "u/name", "/r/name"; not preceded by an alphanumeric so "bu/x" is left alone
_ENTITY_RE = re.compile(r"(?<![^\W_])/?[ur]/[\w-]+", re.IGNORECASE)
_HTML_ENTITY_RE = re.compile(r"&#?[A-Za-z0-9]+;")


@dataclass(frozen=True)
class StopwordList:
    words: frozenset[str]
    source: str = "builtin"

    def __post_init__(self):
        for w in self.words:
            if w != w.lower() or any(ch.isspace() for ch in w) or not w:
                raise ValueError(f"invalid stopword entry {w!r}")

    def __contains__(self, token: str) -> bool:
        return token in self.words

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def from_words(cls, words: Iterable[str], source: str = "inline") -> "StopwordList":
        return cls(frozenset(words), source)

    @classmethod
    def empty(cls) -> "StopwordList":
        return cls(frozenset(), "empty")


def parse_stopwords(text: str) -> set[str]:
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.add(line.lower())
    return words


def load_stopwords(path: str | Path) -> StopwordList:
    """Read a stopword file: one word per line, ``#`` starts a comment."""
    text = Path(path).read_text(encoding="utf-8")
    return StopwordList(frozenset(parse_stopwords(text)), str(path))


@lru_cache(maxsize=1)
def default_stopwords() -> StopwordList:
    text = resources.files("stressdetect").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return StopwordList(frozenset(parse_stopwords(text)), "builtin")


def clean(text: str) -> str:
    text = _URL_RE.sub("", text)
    text = _ENTITY_RE.sub("", text)
    text = _HTML_ENTITY_RE.sub("", text)
    return "".join(ch if ch.isalnum() else " " for ch in text)


def _alnum_runs(text: str) -> list[str]:
    runs = []
    start = None
    for i, ch in enumerate(text):
        if ch.isalnum():
            if start is None:
                start = i
        elif start is not None:
            runs.append(text[start:i])
            start = None
    if start is not None:
        runs.append(text[start:])
    return runs


def tokenize(text: str) -> list[str]:
    return [
        tok
        for tok in _alnum_runs(text.lower())
        if len(tok) >= 2 and not tok.isdigit()
    ]


def remove_stopwords(tokens: list[str], stopwords: StopwordList) -> list[str]:
    return [tok for tok in tokens if tok not in stopwords]


def preprocess(text: str, stopwords: StopwordList | None = None) -> list[str]:
    if stopwords is None:
        stopwords = default_stopwords()
    return remove_stopwords(tokenize(clean(text)), stopwords)
