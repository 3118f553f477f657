"""Feature pipeline: domain string indexer, Word2Vec document mean, vector
assembly and z-score standardization."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import LabeledPost, Post
from .textprep import StopwordList, default_stopwords, preprocess
from .word2vec import W2VConfig, Word2VecModel, train_word2vec


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class StringIndexerModel:
    mapping: dict[str, int]

    @property
    def unknown_index(self) -> int:
        return len(self.mapping)

    def transform(self, value: str) -> int:
        return self.mapping.get(value, self.unknown_index)


def fit_string_indexer(values: Sequence[str]) -> StringIndexerModel:
    if not values:
        raise FeatureError("cannot fit a string indexer on an empty list")
    counts = Counter(values)
    ordered = sorted(counts, key=lambda v: (-counts[v], v))
    return StringIndexerModel({v: i for i, v in enumerate(ordered)})


def assemble(parts: Sequence[np.ndarray | Sequence[float] | float]) -> np.ndarray:
    chunks = []
    for i, part in enumerate(parts):
        arr = np.atleast_1d(np.asarray(part, dtype=np.float64))
        if arr.ndim != 1:
            raise FeatureError(f"part {i} is not a vector or scalar")
        if not np.all(np.isfinite(arr)):
            raise FeatureError(f"part {i} contains a non-finite value")
        chunks.append(arr)
    if not chunks:
        return np.zeros(0)
    return np.concatenate(chunks)


@dataclass(frozen=True)
class StandardScalerModel:
    means: np.ndarray
    stds: np.ndarray

    def transform(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.means.shape:
            raise FeatureError(f"expected dimension {self.means.shape[0]}, got {v.shape}")
        out = np.zeros_like(v)
        nz = self.stds > 0
        out[nz] = (v[nz] - self.means[nz]) / self.stds[nz]
        return out


def fit_scaler(rows: Sequence[np.ndarray]) -> StandardScalerModel:
    if len(rows) < 2:
        raise FeatureError("fit_scaler needs at least 2 rows")
    X = np.vstack(rows).astype(np.float64)
    return StandardScalerModel(X.mean(axis=0), X.std(axis=0, ddof=1))


@dataclass(frozen=True)
class FeatureConfig:
    w2v: W2VConfig = field(default_factory=W2VConfig)
    use_domain: bool = True
    aux: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"w2v": self.w2v.to_dict(), "use_domain": self.use_domain, "aux": list(self.aux)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(W2VConfig.from_dict(d["w2v"]), bool(d["use_domain"]), tuple(d["aux"]))


@dataclass(frozen=True)
class FeaturePipeline:
    w2v: Word2VecModel
    scaler: StandardScalerModel
    stopwords: StopwordList
    indexer: StringIndexerModel | None = None
    use_aux: tuple[str, ...] = ()

    @property
    def output_dim(self) -> int:
        return self.w2v.dim + (1 if self.indexer is not None else 0) + len(self.use_aux)

    def raw_vector(self, post: Post) -> np.ndarray:
        parts: list = [self.w2v.embed(preprocess(post.body, self.stopwords))]
        if self.indexer is not None:
            parts.append(float(self.indexer.transform(post.domain)))
        if self.use_aux:
            parts.append([post.aux(name) for name in self.use_aux])
        return assemble(parts)

    def transform(self, post: Post) -> np.ndarray:
        return self.scaler.transform(self.raw_vector(post))

    def transform_many(self, posts: Sequence[Post]) -> np.ndarray:
        if not posts:
            return np.zeros((0, self.output_dim))
        return np.vstack([self.transform(p) for p in posts])

    def to_dict(self) -> dict:
        return {
            "w2v": self.w2v.to_dict(),
            "scaler": {"means": self.scaler.means.tolist(), "stds": self.scaler.stds.tolist()},
            "stopwords": sorted(self.stopwords.words),
            "indexer": None if self.indexer is None else sorted(
                self.indexer.mapping, key=self.indexer.mapping.__getitem__),
            "use_aux": list(self.use_aux),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeaturePipeline":
        indexer = None
        if d["indexer"] is not None:
            indexer = StringIndexerModel({v: i for i, v in enumerate(d["indexer"])})
        scaler = StandardScalerModel(
            np.asarray(d["scaler"]["means"], dtype=np.float64),
            np.asarray(d["scaler"]["stds"], dtype=np.float64),
        )
        pipe = cls(
            w2v=Word2VecModel.from_dict(d["w2v"]),
            scaler=scaler,
            stopwords=StopwordList.from_words(d["stopwords"], "artifact"),
            indexer=indexer,
            use_aux=tuple(d["use_aux"]),
        )
        if scaler.means.shape != (pipe.output_dim,) or scaler.stds.shape != (pipe.output_dim,):
            raise FeatureError("scaler dimensions do not match the pipeline output")
        return pipe


def fit_pipeline(train: Sequence[LabeledPost], cfg: FeatureConfig | None = None,
                 stopwords: StopwordList | None = None) -> FeaturePipeline:
    """Fit every stage on ``train`` only."""
    cfg = cfg or FeatureConfig()
    if stopwords is None:
        stopwords = default_stopwords()
    if len(train) < 2:
        raise FeatureError("need at least 2 training posts")
    posts = [lp.post for lp in train]
    w2v = train_word2vec([preprocess(p.body, stopwords) for p in posts], cfg.w2v)
    indexer = fit_string_indexer([p.domain for p in posts]) if cfg.use_domain else None

    # the scaler is fitted last, on assembled raw vectors of the same rows
    unscaled = FeaturePipeline(
        w2v=w2v,
        scaler=StandardScalerModel(np.zeros(0), np.zeros(0)),
        stopwords=stopwords,
        indexer=indexer,
        use_aux=tuple(cfg.aux),
    )
    scaler = fit_scaler([unscaled.raw_vector(p) for p in posts])
    return FeaturePipeline(w2v, scaler, stopwords, indexer, tuple(cfg.aux))


def transform_pipeline(pipeline: FeaturePipeline | None, post: Post) -> np.ndarray:
    if pipeline is None:
        raise FeatureError("feature pipeline has not been fitted")
    return pipeline.transform(post)
