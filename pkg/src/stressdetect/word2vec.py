"""Skip-gram Word2Vec with negative sampling, trained by minibatch SGD in numpy.

Pairs are generated with the usual dynamic window (each center word draws an
effective radius uniformly from ``1..window``), shuffled once per epoch, and
consumed in minibatches. Negatives come from the unigram distribution raised
to the 3/4 power. The learning rate decays linearly from ``learning_rate`` to
``min_learning_rate`` over all minibatches. Everything random flows from one
``numpy.random.Generator`` seeded by ``W2VConfig.seed``, so training is
bit-reproducible on a given platform.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np


class Word2VecError(ValueError):
    pass


@dataclass(frozen=True)
class W2VConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 10
    min_count: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "window", "epochs", "min_count", "batch_size"):
            if getattr(self, name) < 1:
                raise Word2VecError(f"{name} must be >= 1")
        if self.negatives < 0:
            raise Word2VecError("negatives must be >= 0")
        if not self.learning_rate > 0:
            raise Word2VecError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "W2VConfig":
        return cls(**d)


@dataclass
class Word2VecModel:
    vocab: dict[str, int]
    vectors: np.ndarray
    config: W2VConfig

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.vocab[token]]

    def similarity(self, a: str, b: str) -> float:
        va, vb = self.vector(a), self.vector(b)
        denom = np.linalg.norm(va) * np.linalg.norm(vb)
        return float(va @ vb / denom) if denom > 0 else 0.0

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        """Mean of in-vocabulary token vectors; zeros if none are known."""
        rows = [self.vocab[t] for t in tokens if t in self.vocab]
        out = np.zeros(self.dim)
        if not rows:
            return out
        for r in rows:
            out += self.vectors[r]
        return out / len(rows)

    def to_dict(self) -> dict:
        words = sorted(self.vocab, key=self.vocab.__getitem__)
        return {
            "config": self.config.to_dict(),
            "words": words,
            "vectors": self.vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Word2VecModel":
        words = d["words"]
        vectors = np.asarray(d["vectors"], dtype=np.float64).reshape(len(words), -1)
        if not np.all(np.isfinite(vectors)):
            raise Word2VecError("non-finite word vector in serialized model")
        return cls({w: i for i, w in enumerate(words)}, vectors, W2VConfig.from_dict(d["config"]))


def build_vocab(corpus: Sequence[Sequence[str]], min_count: int) -> tuple[dict[str, int], np.ndarray]:
    counts = Counter(tok for doc in corpus for tok in doc)
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    return {w: i for i, w in enumerate(kept)}, np.array([counts[w] for w in kept], dtype=np.float64)


def _skipgram_pairs(ids: np.ndarray, doc_of: np.ndarray, window: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    radius = rng.integers(1, window + 1, size=len(ids))
    centers, contexts = [], []
    for d in range(1, window + 1):
        if d >= len(ids):
            break
        same_doc = doc_of[:-d] == doc_of[d:]
        # left position i is center, right i+d is context
        fwd = same_doc & (radius[:-d] >= d)
        centers.append(ids[:-d][fwd])
        contexts.append(ids[d:][fwd])
        bwd = same_doc & (radius[d:] >= d)
        centers.append(ids[d:][bwd])
        contexts.append(ids[:-d][bwd])
    if not centers:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_word2vec(corpus: Sequence[Sequence[str]], cfg: W2VConfig | None = None) -> Word2VecModel:
    cfg = cfg or W2VConfig()
    if not corpus:
        raise Word2VecError("empty corpus")
    vocab, counts = build_vocab(corpus, cfg.min_count)
    if not vocab:
        raise Word2VecError(f"no token reaches min_count={cfg.min_count}")

    rng = np.random.default_rng(cfg.seed)
    V, dim = len(vocab), cfg.dim
    w_in = (rng.random((V, dim)) - 0.5) / dim
    w_out = np.zeros((V, dim))

    noise = counts ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    id_docs = [np.array([vocab[t] for t in doc if t in vocab], dtype=np.int64) for doc in corpus]
    ids = np.concatenate(id_docs) if id_docs else np.empty(0, dtype=np.int64)
    doc_of = np.repeat(np.arange(len(id_docs)), [len(d) for d in id_docs])

    # pair counts vary per epoch with the dynamic window; estimate schedule length up front
    est_pairs = 0
    for d in range(1, cfg.window + 1):
        if d < len(ids):
            est_pairs += 2 * int(np.sum(doc_of[:-d] == doc_of[d:])) * (cfg.window - d + 1) / cfg.window
    total_batches = max(1, cfg.epochs * int(np.ceil(est_pairs / cfg.batch_size)))
    step = 0

    for _ in range(cfg.epochs):
        centers, contexts = _skipgram_pairs(ids, doc_of, cfg.window, rng)
        order = rng.permutation(len(centers))
        centers, contexts = centers[order], contexts[order]
        for start in range(0, len(centers), cfg.batch_size):
            c = centers[start:start + cfg.batch_size]
            o = contexts[start:start + cfg.batch_size]
            frac = min(step / total_batches, 1.0)
            lr = max(cfg.learning_rate * (1.0 - frac), cfg.min_learning_rate)
            step += 1

            # targets: column 0 is the true context, the rest are negatives
            negs = np.searchsorted(noise_cdf, rng.random((len(c), cfg.negatives)), side="right")
            targets = np.concatenate([o[:, None], negs], axis=1)
            labels = np.zeros(targets.shape)
            labels[:, 0] = 1.0

            h = w_in[c]                              # (B, dim)
            t = w_out[targets]                       # (B, 1+K, dim)
            scores = np.einsum("bd,bkd->bk", h, t)
            g = (labels - _sigmoid(scores)) * lr     # (B, 1+K)
            grad_in = np.einsum("bk,bkd->bd", g, t)
            grad_out = g[:, :, None] * h[:, None, :]
            np.add.at(w_out, targets.ravel(), grad_out.reshape(-1, dim))
            np.add.at(w_in, c, grad_in)

    if not np.all(np.isfinite(w_in)):
        raise Word2VecError("training diverged (non-finite vectors)")
    return Word2VecModel(vocab, w_in, cfg)
