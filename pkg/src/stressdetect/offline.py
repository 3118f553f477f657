"""Offline system: fit features and a classifier on labeled posts, score posts,
and package the result as a model artifact."""

from __future__ import annotations

import dataclasses
import json
import shutil
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text
from .corpus import LabeledPost, Post
from .evaluation import MetricsReport, Trainer, score
from .features import FeatureConfig, FeaturePipeline, fit_pipeline
from .models import Classifier, train_model
from .models.persist import ModelArtifact, load_model
from .textprep import StopwordList, preprocess


def seeded_features(cfg: FeatureConfig, seed: int) -> FeatureConfig:
    return dataclasses.replace(cfg, w2v=dataclasses.replace(cfg.w2v, seed=seed))


def fit(train: Sequence[LabeledPost], model_type: str, feature_cfg: FeatureConfig | None = None,
        hyperparams: dict | None = None, seed: int = 0,
        stopwords: StopwordList | None = None) -> tuple[FeaturePipeline, Classifier]:
    cfg = seeded_features(feature_cfg or FeatureConfig(), seed)
    pipeline = fit_pipeline(train, cfg, stopwords)
    return pipeline, fit_on_pipeline(pipeline, train, model_type, hyperparams, seed)


def fit_on_pipeline(pipeline: FeaturePipeline, train: Sequence[LabeledPost], model_type: str,
                    hyperparams: dict | None = None, seed: int = 0) -> Classifier:
    X = pipeline.transform_many([lp.post for lp in train])
    y = np.array([lp.label for lp in train])
    return train_model(model_type, X, y, hyperparams, seed=seed)


def score_posts(pipeline: FeaturePipeline, model: Classifier,
                posts: Sequence[Post]) -> list[tuple[int, float]]:
    """Per-post ``(label, score)``; the streaming path uses the same calls."""
    return [model.predict_one(pipeline.transform(p)) for p in posts]


def evaluate(pipeline: FeaturePipeline, model: Classifier,
             data: Sequence[LabeledPost]) -> MetricsReport:
    preds = [label for label, _ in score_posts(pipeline, model, [lp.post for lp in data])]
    return score(preds, [lp.label for lp in data])


def make_trainer(model_type: str, feature_cfg: FeatureConfig | None = None,
                 hyperparams: dict | None = None,
                 stopwords: StopwordList | None = None) -> Trainer:
    def trainer(rows: list[LabeledPost], seed: int):
        pipeline, model = fit(rows, model_type, feature_cfg, hyperparams, seed, stopwords)

        def predict(posts: list[Post]) -> list[int]:
            return [label for label, _ in score_posts(pipeline, model, posts)]

        return predict

    return trainer


def build_artifact(pipeline: FeaturePipeline, model: Classifier, created_at: str) -> ModelArtifact:
    return ModelArtifact(model=model, pipeline=pipeline, created_at=created_at)


def save_pipeline(pipeline: FeaturePipeline, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(pipeline.to_dict(), sort_keys=True,
                                       separators=(",", ":"), allow_nan=False) + "\n")


def load_pipeline(path: str | Path) -> FeaturePipeline:
    return FeaturePipeline.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def preprocess_to_jsonl(data: Sequence[LabeledPost], path: str | Path,
                        stopwords: StopwordList | None = None) -> int:
    """One ``{"post_id", "label", "tokens"}`` line per post."""
    lines = [json.dumps({"post_id": lp.post_id, "label": lp.label,
                         "tokens": preprocess(lp.post.body, stopwords)}, ensure_ascii=False)
             for lp in data]
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    return len(lines)


def publish_model(artifact_path: str | Path, model_dir: str | Path) -> Path:
    """Copy a validated artifact to ``<model_dir>/<model_id>.json`` and point
    ``<model_dir>/LATEST`` at it."""
    artifact = load_model(artifact_path)
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    target = model_dir / f"{artifact.model_id}.json"
    if not target.exists():
        tmp = model_dir / f".{target.name}.tmp"
        shutil.copyfile(artifact_path, tmp)
        tmp.replace(target)
    atomic_write_text(model_dir / "LATEST", target.name + "\n")
    return target
