"""Model artifact files.

An artifact is one UTF-8 JSON document::

    {
      "schema_version": "1",
      "model_type": "logreg" | "svm" | "dtree" | "rforest" | "gbt",
      "created_at": "<ISO-8601 UTC timestamp>",
      "hyperparams": {...},
      "params": {...},          # model-type specific payload
      "pipeline": {...}         # fitted feature pipeline incl. vocab and vectors
    }

Floats are written with Python's shortest round-trip repr, keys are sorted,
so saving the same model twice yields identical bytes.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .._io import atomic_write_text
from ..features import FeaturePipeline
from . import MODEL_CLASSES
from .base import Classifier, ModelError

SCHEMA_VERSION = "1"


class ArtifactError(ModelError):
    pass


def utc_now_iso() -> str:
    return dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat()


@dataclass
class ModelArtifact:
    model: Classifier
    pipeline: FeaturePipeline
    created_at: str
    schema_version: str = SCHEMA_VERSION

    @property
    def model_type(self) -> str:
        return self.model.model_type

    @property
    def hyperparams(self) -> dict:
        return self.model.hyperparams()

    @property
    def params(self) -> dict:
        return self.model.params()

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "model_type": self.model_type,
            "created_at": self.created_at,
            "hyperparams": self.hyperparams,
            "params": self.params,
            "pipeline": self.pipeline.to_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          allow_nan=False, ensure_ascii=False) + "\n"

    @cached_property
    def model_id(self) -> str:
        digest = hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()
        return f"{self.model_type}-{digest[:12]}"

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelArtifact":
        if not isinstance(doc, dict):
            raise ArtifactError("artifact must be a JSON object")
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ArtifactError(f"unsupported artifact schema_version {version!r}")
        model_type = doc.get("model_type")
        if model_type not in MODEL_CLASSES:
            raise ArtifactError(f"unknown model_type {model_type!r}")
        try:
            model = MODEL_CLASSES[model_type].from_params(doc["hyperparams"], doc["params"])
            pipeline = FeaturePipeline.from_dict(doc["pipeline"])
            created_at = str(doc["created_at"])
        except ArtifactError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ArtifactError(f"malformed artifact: {exc!r}") from None
        return cls(model, pipeline, created_at, version)


def save_model(artifact: ModelArtifact, path: str | Path) -> None:
    atomic_write_text(path, artifact.dumps())


def load_model(path: str | Path) -> ModelArtifact:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}")
    raw = path.read_bytes()
    if not raw.strip():
        raise ArtifactError(f"corrupt artifact {path}: file is empty")
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"corrupt artifact {path}: {exc}") from None
    return ModelArtifact.from_dict(doc)
