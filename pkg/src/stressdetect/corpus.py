"""Loading, splitting and summarizing labeled and unlabeled post datasets."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


class CorpusError(ValueError):
    pass


class SchemaError(CorpusError):
    pass


class RowError(CorpusError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class EmptyDatasetError(CorpusError):
    pass


@dataclass(frozen=True)
class Post:
    post_id: str
    domain: str = ""
    body: str = ""
    created_at: int = 0
    aux_features: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if not self.post_id:
            raise CorpusError("post_id must be non-empty")
        names = [name for name, _ in self.aux_features]
        if len(set(names)) != len(names):
            raise CorpusError(f"duplicate aux feature names in post {self.post_id!r}")

    def aux(self, name: str) -> float:
        for key, value in self.aux_features:
            if key == name:
                return value
        raise KeyError(f"post {self.post_id!r} has no aux feature {name!r}")


@dataclass(frozen=True)
class LabeledPost:
    post: Post
    label: int
    confidence: float | None = None

    def __post_init__(self):
        if self.label not in (0, 1) or isinstance(self.label, bool):
            raise CorpusError(f"label must be 0 or 1, got {self.label!r}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise CorpusError(f"confidence must lie in [0, 1], got {self.confidence!r}")

    @property
    def post_id(self) -> str:
        return self.post.post_id


@dataclass(frozen=True)
class DatasetSplit:
    train: list[LabeledPost]
    test: list[LabeledPost]
    seed: int
    ratio: float


@dataclass(frozen=True)
class AnnotationSet:
    post_id: str
    rater_labels: tuple[int, ...]


@dataclass(frozen=True)
class CorpusStats:
    n_posts: int
    label1_ratio: float
    min_len: int
    max_len: int
    mean_len: float
    vocab_size: int
    per_domain_counts: dict[str, int]
    n_empty_body: int = 0

    def to_dict(self) -> dict:
        return {
            "n_posts": self.n_posts,
            "label1_ratio": self.label1_ratio,
            "min_len": self.min_len,
            "max_len": self.max_len,
            "mean_len": self.mean_len,
            "vocab_size": self.vocab_size,
            "n_empty_body": self.n_empty_body,
            "per_domain_counts": dict(self.per_domain_counts),
        }


@dataclass
class CsvSchema:
    """Column names for a labeled CSV.

    ``aux`` is either an explicit list of numeric columns, the string
    ``"numeric"`` meaning every remaining column whose values all parse as
    numbers, or ``None`` for no aux features. Optional columns that are absent
    from the file are ignored; required ones raise :class:`SchemaError`.
    """

    text: str = "text"
    label: str = "label"
    id: str | None = "id"
    domain: str | None = "subreddit"
    timestamp: str | None = "social_timestamp"
    confidence: str | None = "confidence"
    aux: list[str] | str | None = None
    # columns never treated as aux even under aux="numeric"
    exclude: list[str] = field(default_factory=list)


def _parse_label(raw: str, row: int) -> int:
    value = raw.strip()
    if value == "0":
        return 0
    if value == "1":
        return 1
    raise RowError(row, f"label must be 0 or 1, got {raw!r}")


def _parse_float(raw: str) -> float | None:
    try:
        value = float(raw)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _parse_int(raw: str, row: int, column: str) -> int:
    raw = raw.strip()
    if not raw:
        return 0
    try:
        return int(raw)
    except ValueError:
        value = _parse_float(raw)
        if value is None or value != int(value):
            raise RowError(row, f"column {column!r} is not an integer: {raw!r}") from None
        return int(value)


def load_labeled_csv(path: str | Path, schema: CsvSchema | None = None) -> list[LabeledPost]:
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise EmptyDatasetError(f"{path}: empty file")
        rows = list(reader)
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")

    for required in (schema.text, schema.label):
        if required not in header:
            raise SchemaError(f"{path}: missing required column {required!r}")

    def present(col: str | None) -> str | None:
        return col if col is not None and col in header else None

    id_col = present(schema.id)
    domain_col = present(schema.domain)
    ts_col = present(schema.timestamp)
    conf_col = present(schema.confidence)

    if schema.aux is None:
        aux_cols: list[str] = []
    elif schema.aux == "numeric":
        used = {schema.text, schema.label, id_col, domain_col, ts_col, conf_col, *schema.exclude}
        aux_cols = [
            col for col in header
            if col not in used
            and all(_parse_float(r[col] or "") is not None for r in rows)
        ]
    else:
        aux_cols = list(schema.aux)
        for col in aux_cols:
            if col not in header:
                raise SchemaError(f"{path}: missing aux column {col!r}")

    out = []
    for i, r in enumerate(rows):
        rownum = i + 1
        label = _parse_label(r[schema.label] or "", rownum)
        aux = []
        for col in aux_cols:
            value = _parse_float(r[col] or "")
            if value is None:
                raise RowError(rownum, f"aux column {col!r} is not a finite number: {r[col]!r}")
            aux.append((col, value))
        confidence = None
        if conf_col and (r[conf_col] or "").strip():
            confidence = _parse_float(r[conf_col])
            if confidence is None:
                raise RowError(rownum, f"unparseable confidence {r[conf_col]!r}")
        post_id = (r[id_col] or "").strip() if id_col else ""
        try:
            post = Post(
                post_id=post_id or str(i),
                domain=(r[domain_col] or "") if domain_col else "",
                body=r[schema.text] or "",
                created_at=_parse_int(r[ts_col] or "", rownum, ts_col) if ts_col else 0,
                aux_features=tuple(aux),
            )
            out.append(LabeledPost(post, label, confidence))
        except RowError:
            raise
        except CorpusError as exc:
            raise RowError(rownum, str(exc)) from None
    return out


def write_labeled_csv(data: Sequence[LabeledPost], path: str | Path,
                      schema: CsvSchema | None = None) -> None:
    """Inverse of :func:`load_labeled_csv` for posts sharing the same aux names."""
    schema = schema or CsvSchema()
    aux_names = [name for name, _ in data[0].post.aux_features] if data else []
    columns = [c for c in (schema.id, schema.domain, schema.timestamp) if c]
    columns += [schema.text, schema.label]
    if schema.confidence:
        columns.append(schema.confidence)
    columns += aux_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for lp in data:
            p = lp.post
            if [name for name, _ in p.aux_features] != aux_names:
                raise CorpusError("all posts must carry the same aux feature names")
            row = []
            if schema.id:
                row.append(p.post_id)
            if schema.domain:
                row.append(p.domain)
            if schema.timestamp:
                row.append(str(p.created_at))
            row += [p.body, str(lp.label)]
            if schema.confidence:
                row.append("" if lp.confidence is None else repr(lp.confidence))
            row += [repr(float(v)) for _, v in p.aux_features]
            writer.writerow(row)


def post_to_dict(post: Post) -> dict:
    d = {
        "post_id": post.post_id,
        "domain": post.domain,
        "body": post.body,
        "created_at": post.created_at,
    }
    if post.aux_features:
        d["aux"] = {name: value for name, value in post.aux_features}
    return d


def post_to_json(post: Post) -> str:
    return json.dumps(post_to_dict(post), ensure_ascii=False, allow_nan=False)


def post_from_dict(d: dict) -> Post:
    if not isinstance(d, dict):
        raise CorpusError("post must be a JSON object")
    post_id = d.get("post_id")
    if not isinstance(post_id, str) or not post_id:
        raise CorpusError("post_id must be a non-empty string")
    domain = d.get("domain", "")
    body = d.get("body", "")
    created_at = d.get("created_at", 0)
    if not isinstance(domain, str) or not isinstance(body, str):
        raise CorpusError("domain and body must be strings")
    if not isinstance(created_at, int) or isinstance(created_at, bool):
        raise CorpusError("created_at must be an integer")
    aux = d.get("aux") or {}
    if not isinstance(aux, dict):
        raise CorpusError("aux must be an object of name -> number")
    pairs = []
    for name, value in aux.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise CorpusError(f"aux value for {name!r} must be a finite number")
        pairs.append((name, float(value)))
    return Post(post_id, domain, body, created_at, tuple(pairs))


def post_from_json(text: str | bytes) -> Post:
    try:
        d = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorpusError(f"invalid JSON: {exc}") from None
    return post_from_dict(d)


def load_posts_jsonl(path: str | Path) -> list[Post]:
    posts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                posts.append(post_from_json(line))
            except CorpusError as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from None
    return posts


def write_posts_jsonl(posts: Iterable[Post], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(post_to_json(post) + "\n")


def split(data: Sequence[LabeledPost], ratio: float, seed: int) -> DatasetSplit:
    n = len(data)
    if n < 2:
        raise CorpusError(f"need at least 2 rows to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise CorpusError(f"ratio must lie in (0, 1), got {ratio}")
    n_train = min(max(math.floor(ratio * n + 0.5), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    train = [data[i] for i in order[:n_train]]
    test = [data[i] for i in order[n_train:]]
    return DatasetSplit(train, test, seed, ratio)


def corpus_stats(data: Sequence[LabeledPost], tokenizer: Callable[[str], list[str]]) -> CorpusStats:
    if not data:
        raise EmptyDatasetError("corpus_stats needs at least one post")
    lengths = []
    vocab: set[str] = set()
    domains: Counter[str] = Counter()
    n_empty = 0
    for lp in data:
        tokens = tokenizer(lp.post.body)
        lengths.append(len(tokens))
        vocab.update(tokens)
        domains[lp.post.domain] += 1
        if not lp.post.body.strip():
            n_empty += 1
    return CorpusStats(
        n_posts=len(data),
        label1_ratio=sum(lp.label for lp in data) / len(data),
        min_len=min(lengths),
        max_len=max(lengths),
        mean_len=sum(lengths) / len(lengths),
        vocab_size=len(vocab),
        per_domain_counts=dict(sorted(domains.items())),
        n_empty_body=n_empty,
    )


def majority_label(ann: AnnotationSet) -> int:
    votes = ann.rater_labels
    if len(votes) < 3 or len(votes) % 2 == 0:
        raise CorpusError(
            f"post {ann.post_id!r}: need an odd number of raters >= 3, got {len(votes)}"
        )
    if any(v not in (0, 1) for v in votes):
        raise CorpusError(f"post {ann.post_id!r}: rater labels must be 0 or 1")
    ones = sum(votes)
    return 1 if 2 * ones > len(votes) else 0


def load_annotations_csv(path: str | Path, id_column: str,
                         rater_columns: Sequence[str]) -> list[AnnotationSet]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (id_column, *rater_columns):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        out = []
        for i, r in enumerate(reader, start=1):
            labels = tuple(_parse_label(r[c] or "", i) for c in rater_columns)
            out.append(AnnotationSet(r[id_column], labels))
    return out
