"""Built-in DAG actions.

Each action takes the task's ``args`` mapping. Actions that mirror a CLI
subcommand are run through :func:`stressdetect.cli.main` in-process, with
``args`` turned into flags (``created_at: X`` becomes ``--created-at X``).
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

from .corpus import CsvSchema, load_labeled_csv
from .features import FeatureConfig, fit_pipeline
from .offline import preprocess_to_jsonl, publish_model, save_pipeline, seeded_features
from .textprep import default_stopwords, load_stopwords
from .word2vec import W2VConfig


class ActionError(RuntimeError):
    pass


def to_argv(args: dict, positional: tuple[str, ...] = ()) -> list[str]:
    args = dict(args)
    argv = []
    for name in positional:
        if name not in args:
            raise ActionError(f"missing argument {name!r}")
        argv.append(str(args.pop(name)))
    for key, value in args.items():
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif value is False or value is None:
            continue
        elif isinstance(value, (list, tuple)):
            for v in value:
                argv += [flag, str(v)]
        elif isinstance(value, dict):
            for k, v in value.items():
                argv += [flag, f"{k}={v}"]
        else:
            argv += [flag, str(value)]
    return argv


def cli_action(command: list[str], positional: tuple[str, ...] = ()) -> Callable[[dict], None]:
    def run(args: dict) -> None:
        from .cli import main

        argv = command + to_argv(args, positional)
        code = main(argv)
        if code != 0:
            raise ActionError(f"`stressdetect {' '.join(argv)}` exited with status {code}")

    return run


def _need(args: dict, *names: str) -> None:
    missing = [n for n in names if n not in args]
    if missing:
        raise ActionError(f"missing argument(s) {missing}")


def preprocess_action(args: dict) -> None:
    """args: data, out, optional stopwords."""
    _need(args, "data", "out")
    stopwords = load_stopwords(args["stopwords"]) if args.get("stopwords") else default_stopwords()
    data = load_labeled_csv(args["data"], CsvSchema(**args.get("csv", {})))
    preprocess_to_jsonl(data, args["out"], stopwords)


def fit_features_action(args: dict) -> None:
    """args: data, out, optional seed, w2v (mapping), use_domain, stopwords."""
    _need(args, "data", "out")
    stopwords = load_stopwords(args["stopwords"]) if args.get("stopwords") else default_stopwords()
    w2v = W2VConfig.from_dict({**W2VConfig().to_dict(), **args.get("w2v", {})})
    cfg = seeded_features(FeatureConfig(w2v, bool(args.get("use_domain", True))),
                          int(args.get("seed", 0)))
    data = load_labeled_csv(args["data"], CsvSchema(**args.get("csv", {})))
    save_pipeline(fit_pipeline(data, cfg, stopwords), args["out"])


def publish_model_action(args: dict) -> None:
    """args: artifact, model_dir."""
    _need(args, "artifact", "model_dir")
    if not Path(args["artifact"]).is_file():
        raise ActionError(f"artifact not found: {args['artifact']}")
    publish_model(args["artifact"], args["model_dir"])


ACTIONS: dict[str, Callable[[dict], None]] = {
    "preprocess": preprocess_action,
    "fit-features": fit_features_action,
    "train": cli_action(["train"], ("data",)),
    "evaluate": cli_action(["evaluate"], ("artifact", "data")),
    "publish-model": publish_model_action,
    "replay": cli_action(["replay"], ("path",)),
    "serve-stream": cli_action(["serve-stream"]),
}
