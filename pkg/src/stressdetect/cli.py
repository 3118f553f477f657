"""``stressdetect`` command line.

Configuration is layered, later layers winning:

1. built-in defaults
2. a YAML file given with ``--config``
3. environment variables prefixed ``STRESSDETECT_``
4. command-line flags

Reports go to standard output; diagnostics and timings go to standard error.
Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import signal
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import yaml

from . import __version__
from .corpus import (
    CorpusError,
    CsvSchema,
    LabeledPost,
    Post,
    corpus_stats,
    load_annotations_csv,
    load_labeled_csv,
    load_posts_jsonl,
    majority_label,
    post_from_json,
    split,
    write_labeled_csv,
)
from .evaluation import (
    EvaluationError,
    compare_models,
    kfold_cv,
    render_csv,
    render_cv,
    render_leaderboard,
    render_report,
    render_table,
)
from .features import FeatureConfig, FeatureError
from .ingest import ReplayConfig, SyntheticSource, publish, replay, synth_generate
from .models import MODEL_TYPES, ModelError, resolve_hyperparams
from .models.persist import load_model, save_model, utc_now_iso
from .mqlog import LogError, Topic
from .offline import (
    build_artifact,
    evaluate,
    fit,
    fit_on_pipeline,
    load_pipeline,
    make_trainer,
    seeded_features,
)
from .orchestrator import DagError, load_dag, run_dag, validate_dag
from .orchestrator import builtin_actions
from .orchestrator import status as dag_status
from .stream import (
    StreamError,
    StreamJobConfig,
    dedup_predictions,
    read_predictions,
    run_stream_job,
    stress_summary,
)
from .textprep import StopwordList, default_stopwords, load_stopwords, preprocess
from .word2vec import W2VConfig, Word2VecError

log = logging.getLogger("stressdetect")

ENV_PREFIX = "STRESSDETECT_"


class CliError(Exception):
    """Runtime failure reported as ``error: ...`` with exit status 1."""


@dataclass
class GlobalConfig:
    seed: int = 0
    root: str | None = None  # topic log directory; see topic_root
    runs_dir: str = ".stressdetect/runs"
    model_dir: str = ".stressdetect/models"
    stopwords: str | None = None
    w2v: dict = field(default_factory=dict)
    use_domain: bool = True
    aux: list[str] = field(default_factory=list)
    hyperparams: dict[str, dict] = field(default_factory=dict)
    csv: dict = field(default_factory=dict)
    stream: dict = field(default_factory=dict)  # StreamJobConfig fields

    @property
    def topic_root(self) -> str:
        return self.root or ".stressdetect/topics"

    def feature_config(self) -> FeatureConfig:
        w2v = W2VConfig.from_dict({**W2VConfig().to_dict(), **self.w2v})
        return seeded_features(FeatureConfig(w2v, self.use_domain, tuple(self.aux)), self.seed)

    def schema(self) -> CsvSchema:
        return CsvSchema(**self.csv)

    def stopword_list(self) -> StopwordList:
        return default_stopwords() if self.stopwords is None else load_stopwords(self.stopwords)

    def hp(self, model_type: str) -> dict:
        return resolve_hyperparams(model_type, self.hyperparams.get(model_type))


_SCALAR_KEYS = ("seed", "root", "runs_dir", "model_dir", "stopwords", "use_domain")
_CONFIG_KEYS = {f.name for f in dataclasses.fields(GlobalConfig)}
_STREAM_KEYS = {f.name for f in dataclasses.fields(StreamJobConfig)} - {"root"}


def _scalar(text: str):
    """Parse a flag or env value the way YAML would (ints, floats, bools, null)."""
    return yaml.safe_load(text) if text.strip() else ""


def _pairs(items: Sequence[str] | None, what: str) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise CliError(f"{what} expects KEY=VALUE, got {item!r}")
        out[key.strip()] = _scalar(value)
    return out


def _merge(cfg: GlobalConfig, doc: dict, origin: str) -> None:
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise CliError(f"{origin}: unknown config keys {sorted(unknown)}")
    for key, value in doc.items():
        if key in ("w2v", "csv", "stream"):
            getattr(cfg, key).update(value or {})
        elif key == "hyperparams":
            for model_type, params in (value or {}).items():
                cfg.hyperparams.setdefault(model_type, {}).update(params or {})
        elif key == "aux":
            cfg.aux = [value] if isinstance(value, str) else list(value or [])
        else:
            setattr(cfg, key, value)


def _env_layer(environ) -> dict:
    doc: dict = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key in _SCALAR_KEYS:
            doc[key] = _scalar(raw)
        elif key == "aux":
            doc["aux"] = [a for a in raw.split(",") if a]
        elif key.startswith("w2v_"):
            doc.setdefault("w2v", {})[key[4:]] = _scalar(raw)
        elif key.startswith("csv_"):
            doc.setdefault("csv", {})[key[4:]] = _scalar(raw)
        elif key.startswith("stream_"):
            doc.setdefault("stream", {})[key[7:]] = _scalar(raw)
    return doc


def load_config(args: argparse.Namespace, environ=os.environ) -> GlobalConfig:
    cfg = GlobalConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(doc, dict):
            raise CliError(f"{path}: config must be a mapping")
        _merge(cfg, doc, str(path))
    _merge(cfg, _env_layer(environ), "environment")

    flags: dict = {}
    for key in _SCALAR_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            flags[key] = value
    if getattr(args, "aux", None) is not None:
        flags["aux"] = [a for a in args.aux.split(",") if a]
    flags["w2v"] = _pairs(getattr(args, "w2v", None), "--w2v")
    flags["csv"] = _pairs(getattr(args, "csv", None), "--csv")
    hp: dict[str, dict] = {}
    for key, value in _pairs(getattr(args, "hp", None), "--hp").items():
        model_type, dot, name = key.partition(".")
        if dot:
            hp.setdefault(model_type, {})[name] = value
        else:
            for m in _selected_models(args):
                hp.setdefault(m, {})[key] = value
    flags["hyperparams"] = hp
    _merge(cfg, flags, "flags")

    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise CliError(f"seed must be an integer, got {cfg.seed!r}")
    if cfg.stopwords is not None and not Path(cfg.stopwords).is_file():
        raise CliError(f"stopword file not found: {cfg.stopwords}")
    try:
        W2VConfig.from_dict({**W2VConfig().to_dict(), **cfg.w2v})
        CsvSchema(**cfg.csv)
        unknown = set(cfg.stream) - _STREAM_KEYS
        if unknown:
            raise ValueError(f"unknown stream keys {sorted(unknown)}")
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}") from None
    return cfg


def _selected_models(args: argparse.Namespace) -> list[str]:
    if getattr(args, "models", None):
        return args.models
    model = getattr(args, "model", None)
    return [model] if isinstance(model, str) and model in MODEL_TYPES else []


def _out(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def _err(text: str) -> None:
    print(text, file=sys.stderr)


def _load_data(path: str, cfg: GlobalConfig) -> list[LabeledPost]:
    if not Path(path).is_file():
        raise CliError(f"dataset not found: {path}")
    return load_labeled_csv(path, cfg.schema())


def _model_list(text: str) -> list[str]:
    models = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in models if m not in MODEL_TYPES]
    if bad or not models:
        raise argparse.ArgumentTypeError(
            f"unknown model type(s) {bad}; choose from {', '.join(MODEL_TYPES)}")
    return models


# ---------------------------------------------------------------- commands


def cmd_train(args, cfg: GlobalConfig) -> int:
    data = _load_data(args.data, cfg)
    if args.test:
        train, test = data, _load_data(args.test, cfg)
    else:
        parts = split(data, args.ratio, cfg.seed)
        train, test = parts.train, parts.test
    if args.save_test:
        write_labeled_csv(test, args.save_test, cfg.schema())
    t0 = time.perf_counter()
    if args.pipeline:
        pipeline = load_pipeline(args.pipeline)
        model = fit_on_pipeline(pipeline, train, args.model, cfg.hp(args.model), cfg.seed)
    else:
        pipeline, model = fit(train, args.model, cfg.feature_config(), cfg.hp(args.model),
                              cfg.seed, cfg.stopword_list())
    report = evaluate(pipeline, model, test)
    _err(f"trained {args.model} on {len(train)} posts, tested on {len(test)} "
         f"in {time.perf_counter() - t0:.1f}s")
    _out(render_report(args.model, report, args.format))
    artifact = build_artifact(pipeline, model, args.created_at or utc_now_iso())
    out = Path(args.out) if args.out else Path(cfg.model_dir) / f"{artifact.model_id}.json"
    save_model(artifact, out)
    _err(f"artifact {artifact.model_id} written to {out}")
    return 0


def cmd_crossval(args, cfg: GlobalConfig) -> int:
    data = _load_data(args.data, cfg)
    trainer = make_trainer(args.model, cfg.feature_config(), cfg.hp(args.model), cfg.stopword_list())
    t0 = time.perf_counter()
    result = kfold_cv(data, args.k, trainer, cfg.seed)
    _err(f"{args.k}-fold cross-validation took {time.perf_counter() - t0:.1f}s")
    _out(render_cv(args.model, result, args.format))
    return 0


def _annotated(data: list[LabeledPost], args, path: str) -> list[LabeledPost]:
    raters = [c for c in args.raters.split(",") if c]
    anns = {a.post_id: majority_label(a)
            for a in load_annotations_csv(path, args.id_column, raters)}
    out = []
    for lp in data:
        if lp.post_id not in anns:
            raise CliError(f"post {lp.post_id!r} has no annotations")
        out.append(LabeledPost(lp.post, anns[lp.post_id], lp.confidence))
    return out


def cmd_evaluate(args, cfg: GlobalConfig) -> int:
    artifact = load_model(args.artifact)
    if args.raters:
        raters = [c for c in args.raters.split(",") if c]
        schema = dataclasses.replace(cfg.schema(), label=raters[0], id=args.id_column)
        if not Path(args.data).is_file():
            raise CliError(f"dataset not found: {args.data}")
        data = _annotated(load_labeled_csv(args.data, schema), args, args.data)
    else:
        data = _load_data(args.data, cfg)
    report = evaluate(artifact.pipeline, artifact.model, data)
    _out(render_report(artifact.model_type, report, args.format))
    return 0


def cmd_compare(args, cfg: GlobalConfig) -> int:
    data = _load_data(args.data, cfg)
    if args.test:
        train, test = data, _load_data(args.test, cfg)
    else:
        parts = split(data, args.ratio, cfg.seed)
        train, test = parts.train, parts.test
    reports = []
    pipeline = None
    for model_type in args.models:
        t0 = time.perf_counter()
        if pipeline is None:
            pipeline, model = fit(train, model_type, cfg.feature_config(), cfg.hp(model_type),
                                  cfg.seed, cfg.stopword_list())
        else:
            model = fit_on_pipeline(pipeline, train, model_type, cfg.hp(model_type), cfg.seed)
        reports.append((model_type, evaluate(pipeline, model, test)))
        _err(f"{model_type}: {time.perf_counter() - t0:.1f}s")
    _out(render_leaderboard(compare_models(reports), args.format))
    return 0


def cmd_stats(args, cfg: GlobalConfig) -> int:
    data = _load_data(args.data, cfg)
    stopwords = cfg.stopword_list()
    stats = corpus_stats(data, lambda text: preprocess(text, stopwords))
    rows = []
    for key, value in stats.to_dict().items():
        if key == "per_domain_counts":
            rows += [[f"domain:{d}", str(c)] for d, c in value.items()]
        elif isinstance(value, float):
            rows.append([key, f"{value:.4f}"])
        else:
            rows.append([key, str(value)])
    _out(render_csv(("stat", "value"), rows) if args.format == "csv"
         else render_table(("stat", "value"), rows))
    return 0


def cmd_replay(args, cfg: GlobalConfig) -> int:
    path = args.file or args.path
    if not path:
        raise CliError("replay needs a JSONL file (--file)")
    if not Path(path).is_file():
        raise CliError(f"replay file not found: {path}")
    stop = _stop_on_signals()
    with Topic(cfg.topic_root, args.topic) as topic:
        summary = replay(ReplayConfig(path, args.rate, args.loop), topic, stop, args.limit)
    _err(f"appended {summary.appended} posts to {args.topic} "
         f"({summary.skipped} skipped) in {summary.seconds:.2f}s")
    return 0


class _ListSource:
    def __init__(self, posts: list[Post]):
        self._posts = posts
        self._i = 0
        self.exhausted = not posts

    def next(self) -> Post | None:
        if self._i >= len(self._posts):
            self.exhausted = True
            return None
        self._i += 1
        return self._posts[self._i - 1]


def _stdin_posts() -> list[Post]:
    posts = []
    for lineno, line in enumerate(sys.stdin, start=1):
        if not line.strip():
            continue
        try:
            posts.append(post_from_json(line))
        except CorpusError as exc:
            _err(f"stdin line {lineno} skipped: {exc}")
    return posts


def cmd_produce(args, cfg: GlobalConfig) -> int:
    if args.synthetic is not None:
        source = SyntheticSource(args.synthetic, cfg.seed, args.stress_ratio)
    elif args.path in (None, "-"):
        source = _ListSource(_stdin_posts())
    else:
        if not Path(args.path).is_file():
            raise CliError(f"input file not found: {args.path}")
        source = _ListSource(load_posts_jsonl(args.path))
    stop = _stop_on_signals()
    with Topic(cfg.topic_root, args.topic) as topic:
        n = publish(source, topic, args.rate, stop)
        _err(f"appended {n} posts to {args.topic}; next offset {topic.next_offset}")
    return 0


def _stop_on_signals() -> threading.Event:
    stop = threading.Event()
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: stop.set())
    return stop


def _stream_job(args, cfg: GlobalConfig, root: str, defaults: dict | None = None) -> StreamJobConfig:
    """Flags over the config file's ``stream`` section over ``defaults``."""
    merged = {**(defaults or {}), **cfg.stream}
    for key in _STREAM_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if not merged.get("model_path"):
        raise CliError("no model artifact given (--model or stream.model_path)")
    return StreamJobConfig(root=root, **merged)


def cmd_serve_stream(args, cfg: GlobalConfig) -> int:
    job = _stream_job(args, cfg, cfg.topic_root)
    summary = run_stream_job(job, _stop_on_signals())
    _err(f"stream job {summary.stopped_reason}: {summary.batches} batches, "
         f"{summary.records_ok} predictions, {summary.records_dead} dead letters, "
         f"committed offset {summary.committed_offset}")
    return 0


def _prediction_line(p) -> str:
    return p.to_json() + "\n"


def cmd_dedup(args, cfg: GlobalConfig) -> int:
    with Topic(cfg.topic_root, args.topic) as topic:
        raw = read_predictions(topic)
    unique = dedup_predictions(raw)
    text = "".join(_prediction_line(p) for p in unique)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        _out(text)
    _err(f"{len(raw)} predictions read, {len(unique)} after dedup")
    return 0


def cmd_dag(args, cfg: GlobalConfig) -> int:
    if args.dag_command == "status":
        _out(dag_status(args.run_id, cfg.runs_dir))
        return 0
    if not Path(args.file).is_file():
        raise CliError(f"DAG file not found: {args.file}")
    spec = load_dag(args.file)
    if args.dag_command == "validate":
        report = validate_dag(spec, builtin_actions())
        for msg in report.errors:
            _err(f"invalid: {msg}")
        if report.ok:
            _out(f"{spec.dag_id}: ok ({len(spec.tasks)} tasks)\n")
        return 0 if report.ok else 1
    state = run_dag(spec, cfg.runs_dir, run_id=args.run_id)
    _out(dag_status(state.run_id, cfg.runs_dir))
    return 0 if state.status == "success" else 1


DEMO_STREAM_DEFAULTS = {"trigger_interval": 50, "stop_on_idle": 200}


def cmd_pipeline_demo(args, cfg: GlobalConfig) -> int:
    job = _stream_job(args, cfg, "", DEMO_STREAM_DEFAULTS)
    load_model(job.model_path)  # fail fast on a missing or corrupt artifact
    if args.replay:
        if not Path(args.replay).is_file():
            raise CliError(f"replay file not found: {args.replay}")
        posts = load_posts_jsonl(args.replay)
    else:
        posts = synth_generate(args.synthetic, cfg.seed, args.stress_ratio)
    clock = (lambda: args.processed_at) if args.processed_at is not None else None

    with tempfile.TemporaryDirectory(prefix="stressdetect-demo-") as scratch:
        root = cfg.root or scratch
        t0 = time.perf_counter()
        job = dataclasses.replace(job, root=root)
        with Topic(root, job.input_topic) as topic:
            published = publish(_ListSource(posts), topic, args.rate)
        t1 = time.perf_counter()
        summary = run_stream_job(job, clock=clock) if clock else run_stream_job(job)
        t2 = time.perf_counter()
        with Topic(root, job.output_topic) as out_topic:
            wanted = {p.post_id for p in posts}
            preds = [p for p in dedup_predictions(read_predictions(out_topic))
                     if p.post_id in wanted]
    elapsed = t2 - t0
    _err(f"published {published} posts in {t1 - t0:.2f}s, scored in {t2 - t1:.2f}s "
         f"({published / elapsed if elapsed > 0 else float('inf'):.0f} posts/s end to end); "
         f"{summary.records_dead} dead letters")

    if args.predictions_out:
        Path(args.predictions_out).write_text("".join(_prediction_line(p) for p in preds),
                                              encoding="utf-8")
    stats = stress_summary(preds, {p.post_id: p.created_at for p in posts}, args.bucket_seconds)
    header = ("bucket_start", "posts", "stressed", "stress_rate")
    rows = [[str(b), str(n), str(s), f"{100.0 * s / n:.2f}"] for b, n, s in stats.buckets]
    rows.append(["total", str(stats.total), str(stats.stressed), f"{100.0 * stats.rate:.2f}"])
    if args.format == "csv":
        _out(render_csv(header, rows))
    else:
        _out(f"posts published: {published}\npredictions: {stats.total}\n" + render_table(header, rows))
    if stats.total != len(wanted):
        raise CliError(f"expected {len(wanted)} predictions, got {stats.total}")
    return 0


# ---------------------------------------------------------------- parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="YAML config file")
    g.add_argument("--seed", type=int, help="seed for every random choice (default 0)")
    g.add_argument("--root", help="topic log directory")
    g.add_argument("--runs-dir", dest="runs_dir", help="DAG run-state directory")
    g.add_argument("--model-dir", dest="model_dir", help="default artifact directory")
    g.add_argument("--stopwords", help="stopword file (one word per line, # comments)")
    g.add_argument("--w2v", action="append", metavar="KEY=VALUE",
                   help="Word2Vec setting, e.g. dim=100 (repeatable)")
    g.add_argument("--hp", action="append", metavar="[MODEL.]KEY=VALUE",
                   help="model hyperparameter override (repeatable)")
    g.add_argument("--csv", action="append", metavar="KEY=VALUE",
                   help="CSV column mapping, e.g. text=body (repeatable)")
    dom = g.add_mutually_exclusive_group()
    dom.add_argument("--use-domain", dest="use_domain", action="store_const", const=True)
    dom.add_argument("--no-domain", dest="use_domain", action="store_const", const=False)
    g.add_argument("--aux", help="comma-separated numeric CSV columns to append as features")
    g.add_argument("--format", choices=("text", "csv"), default="text")
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _stream_flags(p: argparse.ArgumentParser, defaults: dict) -> None:
    d = {**dataclasses.asdict(StreamJobConfig("", "")), **defaults}
    p.add_argument("--model", dest="model_path", help="model artifact path")
    p.add_argument("--input-topic", help=f"default {d['input_topic']}")
    p.add_argument("--output-topic", help=f"default {d['output_topic']}")
    p.add_argument("--group", help=f"consumer group, default {d['group']}")
    p.add_argument("--trigger-interval", type=int, metavar="MS",
                   help=f"poll interval when caught up, default {d['trigger_interval']}")
    p.add_argument("--max-batch", type=int, help=f"default {d['max_batch']}")
    p.add_argument("--stop-on-idle", type=int, metavar="MS",
                   help=f"exit after this long without new input, default {d['stop_on_idle']}")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="stressdetect",
                                     description="Stress detection for social media posts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("train", cmd_train, "fit features and a classifier, report test metrics, save an artifact")
    p.add_argument("data", help="labeled CSV")
    p.add_argument("--model", choices=MODEL_TYPES, default="logreg")
    p.add_argument("--test", help="held-out CSV; without it DATA is split by --ratio")
    p.add_argument("--ratio", type=float, default=0.8, help="train share of the split")
    p.add_argument("--pipeline", help="pre-fitted feature pipeline JSON")
    p.add_argument("--out", help="artifact path (default <model-dir>/<model_id>.json)")
    p.add_argument("--created-at", help="pin the artifact timestamp")
    p.add_argument("--save-test", help="write the test rows to this CSV")

    p = add("crossval", cmd_crossval, "k-fold cross-validation")
    p.add_argument("data")
    p.add_argument("--model", choices=MODEL_TYPES, default="logreg")
    p.add_argument("-k", "--k", type=int, default=10)

    p = add("evaluate", cmd_evaluate, "score a saved artifact against labeled posts")
    p.add_argument("artifact")
    p.add_argument("data")
    p.add_argument("--raters", help="comma-separated 0/1 rater columns; label = majority vote")
    p.add_argument("--id-column", default="id")

    p = add("compare", cmd_compare, "train several model types on one split and rank them")
    p.add_argument("data")
    p.add_argument("--models", type=_model_list, default=list(MODEL_TYPES), metavar="M1,M2,...")
    p.add_argument("--test")
    p.add_argument("--ratio", type=float, default=0.8)

    p = add("stats", cmd_stats, "corpus statistics")
    p.add_argument("data")

    p = add("replay", cmd_replay, "append posts from a JSONL file to a topic")
    p.add_argument("path", nargs="?", help="JSONL posts (same as --file)")
    p.add_argument("--file", dest="file")
    p.add_argument("--topic", default="posts")
    p.add_argument("--rate", type=float, help="posts per second (default unthrottled)")
    p.add_argument("--loop", action="store_true")
    p.add_argument("--limit", type=int)

    p = add("produce", cmd_produce, "append synthetic, JSONL or stdin posts to a topic")
    p.add_argument("path", nargs="?", help="JSONL file, or - for stdin")
    p.add_argument("--synthetic", type=int, metavar="N")
    p.add_argument("--stress-ratio", type=float, default=0.5)
    p.add_argument("--topic", default="posts")
    p.add_argument("--rate", type=float)

    p = add("serve-stream", cmd_serve_stream, "run the micro-batch scoring job")
    _stream_flags(p, {})

    p = add("dedup", cmd_dedup, "print predictions with duplicates removed, as JSONL")
    p.add_argument("--topic", default="predictions")
    p.add_argument("--out")

    p = add("dag", cmd_dag, "validate, run or inspect a workflow DAG")
    dsub = p.add_subparsers(dest="dag_command", required=True)
    q = dsub.add_parser("validate", parents=[common])
    q.add_argument("file")
    q = dsub.add_parser("run", parents=[common])
    q.add_argument("file")
    q.add_argument("--run-id")
    q = dsub.add_parser("status", parents=[common])
    q.add_argument("run_id")

    p = add("pipeline-demo", cmd_pipeline_demo,
            "publish posts, score them with the stream job, dedup and summarize")
    p.add_argument("--synthetic", type=int, default=200, metavar="N")
    p.add_argument("--stress-ratio", type=float, default=0.5)
    p.add_argument("--replay", help="JSONL posts instead of synthetic ones")
    p.add_argument("--rate", type=float, help="publish rate in posts per second")
    p.add_argument("--processed-at", type=int, metavar="MS", help="pin prediction timestamps")
    p.add_argument("--predictions-out", help="write deduplicated predictions as JSONL")
    p.add_argument("--bucket-seconds", type=int, default=3600)
    _stream_flags(p, DEMO_STREAM_DEFAULTS)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return args.fn(args, cfg)
    except (CliError, CorpusError, EvaluationError, FeatureError, ModelError, Word2VecError,
            LogError, StreamError, DagError, OSError, ValueError) as exc:
        _err(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
