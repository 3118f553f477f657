"""Accuracy / F1 metrics, k-fold cross-validation and leaderboards."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import LabeledPost, Post


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    f1_pos: float
    f1_neg: float
    f1_macro: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CVResult:
    k: int
    per_fold: list[MetricsReport]
    mean: MetricsReport
    std: MetricsReport
    seed: int
    fold_sizes: list[int]


def confusion(preds: Sequence[int], truth: Sequence[int]) -> ConfusionMatrix:
    if len(preds) != len(truth):
        raise EvaluationError(f"length mismatch: {len(preds)} predictions vs {len(truth)} labels")
    if len(preds) == 0:
        raise EvaluationError("cannot score an empty prediction list")
    p = np.asarray(preds)
    t = np.asarray(truth)
    if not (np.isin(p, (0, 1)).all() and np.isin(t, (0, 1)).all()):
        raise EvaluationError("labels must be 0 or 1")
    return ConfusionMatrix(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
        tn=int(np.sum((p == 0) & (t == 0))),
    )


def _f1(tp: int, fp: int, fn: int) -> float:
    # F1 = 2PR/(P+R) = 2tp / (2tp + fp + fn); 0/0 counts as 0
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total < 1:
        raise EvaluationError("empty confusion matrix")
    f1_pos = _f1(cm.tp, cm.fp, cm.fn)
    f1_neg = _f1(cm.tn, cm.fn, cm.fp)
    return MetricsReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        f1_pos=f1_pos,
        f1_neg=f1_neg,
        f1_macro=(f1_pos + f1_neg) / 2,
    )


def score(preds: Sequence[int], truth: Sequence[int]) -> MetricsReport:
    return metrics(confusion(preds, truth))


def fold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffle ``range(n)`` by ``seed`` and cut it into ``k`` contiguous folds;
    the first ``n % k`` folds are one row larger."""
    if k < 2:
        raise EvaluationError("k must be >= 2")
    if n < k:
        raise EvaluationError(f"cannot make {k} folds from {n} rows")
    order = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(order[start:start + size])
        start += size
    return folds


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


# trainer(train_rows, seed) -> predictor(posts) -> labels
Trainer = Callable[[list[LabeledPost], int], Callable[[list[Post]], Sequence[int]]]


def _aggregate(reports: list[MetricsReport]) -> tuple[MetricsReport, MetricsReport]:
    fields = ("accuracy", "f1_pos", "f1_neg", "f1_macro")
    arr = np.array([[getattr(r, f) for f in fields] for r in reports])
    mean = arr.mean(axis=0)
    std = arr.std(axis=0, ddof=1) if len(reports) > 1 else np.zeros(len(fields))
    return MetricsReport(*map(float, mean)), MetricsReport(*map(float, std))


def kfold_cv(data: Sequence[LabeledPost], k: int, trainer: Trainer, seed: int = 0) -> CVResult:
    """Each fold's trainer sees only the other k-1 folds; the held-out fold is
    predicted from its posts alone (labels withheld)."""
    folds = fold_indices(len(data), k, seed)
    per_fold = []
    for i, held in enumerate(folds):
        held_set = set(held.tolist())
        train_rows = [data[j] for j in range(len(data)) if j not in held_set]
        test_rows = [data[j] for j in held]
        predict = trainer(train_rows, fold_seed(seed, i))
        preds = list(predict([lp.post for lp in test_rows]))
        per_fold.append(score(preds, [lp.label for lp in test_rows]))
    mean, std = _aggregate(per_fold)
    return CVResult(k, per_fold, mean, std, seed, [len(f) for f in folds])


@dataclass(frozen=True)
class LeaderboardRow:
    model: str
    report: MetricsReport


def compare_models(reports: dict[str, MetricsReport] | Sequence[tuple[str, MetricsReport]]) -> list[LeaderboardRow]:
    items = list(reports.items()) if isinstance(reports, dict) else list(reports)
    if not items:
        raise EvaluationError("nothing to compare")
    rows = [LeaderboardRow(name, rep) for name, rep in items]
    # stable: equal keys keep insertion order
    return sorted(rows, key=lambda r: (-r.report.accuracy, -r.report.f1_macro))


def pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


LEADERBOARD_COLUMNS = ("model", "accuracy", "f1_macro", "f1_stress", "f1_nonstress")


def _leaderboard_cells(row: LeaderboardRow) -> list[str]:
    r = row.report
    return [row.model, pct(r.accuracy), pct(r.f1_macro), pct(r.f1_pos), pct(r.f1_neg)]


def render_csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def render_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_leaderboard(rows: Sequence[LeaderboardRow], fmt: str = "text") -> str:
    cells = [_leaderboard_cells(r) for r in rows]
    if fmt == "csv":
        return render_csv(LEADERBOARD_COLUMNS, cells)
    return render_table(LEADERBOARD_COLUMNS, cells)


def render_report(name: str, report: MetricsReport, fmt: str = "text") -> str:
    return render_leaderboard([LeaderboardRow(name, report)], fmt)


def render_cv(name: str, result: CVResult, fmt: str = "text") -> str:
    header = ("fold", "size", "accuracy", "f1_macro", "f1_stress", "f1_nonstress")
    rows = []
    for i, (rep, size) in enumerate(zip(result.per_fold, result.fold_sizes)):
        rows.append([str(i), str(size), pct(rep.accuracy), pct(rep.f1_macro),
                     pct(rep.f1_pos), pct(rep.f1_neg)])
    m, s = result.mean, result.std
    total = str(sum(result.fold_sizes))
    rows.append(["mean", total, pct(m.accuracy), pct(m.f1_macro), pct(m.f1_pos), pct(m.f1_neg)])
    rows.append(["std", total, pct(s.accuracy), pct(s.f1_macro), pct(s.f1_pos), pct(s.f1_neg)])
    if fmt == "csv":
        return render_csv(header, rows)
    return f"model: {name}  k={result.k}  seed={result.seed}\n" + render_table(header, rows)

