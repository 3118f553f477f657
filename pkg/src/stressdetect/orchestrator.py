"""Dependency-ordered task runner for the offline and online workflows.

A DAG file is YAML::

    dag_id: offline
    tasks:
      - name: fit_features
        action: fit-features          # built-in step ...
        args: {data: train.csv, out: build/pipeline.json}
      - name: train
        action: train
        args: {data: train.csv, model: logreg, out: build/model.json}
        depends_on: [fit_features]
        retries: 1                    # extra attempts after a failure
        retry_delay: 500              # ms between attempts
      - name: notify
        command: ["echo", "done"]     # ... or an external command line
        depends_on: [train]

Tasks run one at a time in topological order, ties broken by name. A task
that exhausts its retries fails; every task depending on it, directly or
transitively, is skipped. Run state is rewritten atomically to
``<runs_dir>/<run_id>.json`` after every transition.
"""

from __future__ import annotations

import heapq
import json
import os
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import yaml

from ._io import atomic_write_text

PENDING, RUNNING, SUCCESS, FAILED, SKIPPED = "pending", "running", "success", "failed", "skipped"

Action = Callable[[dict], None]


class DagError(ValueError):
    pass


@dataclass
class TaskSpec:
    name: str
    action: str | None = None
    command: list[str] | None = None
    args: dict = field(default_factory=dict)
    depends_on: list[str] = field(default_factory=list)
    retries: int = 0
    retry_delay: int = 0  # ms


@dataclass
class DagSpec:
    dag_id: str
    tasks: list[TaskSpec]


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    cycle: list[str] | None = None

    @property
    def ok(self) -> bool:
        return not self.errors


def parse_dag(doc: dict) -> DagSpec:
    if not isinstance(doc, dict) or "dag_id" not in doc:
        raise DagError("DAG document must be a mapping with a dag_id")
    tasks = []
    for i, t in enumerate(doc.get("tasks") or []):
        if not isinstance(t, dict) or "name" not in t:
            raise DagError(f"task #{i} must be a mapping with a name")
        unknown = set(t) - {"name", "action", "command", "args", "depends_on", "retries", "retry_delay"}
        if unknown:
            raise DagError(f"task {t['name']!r}: unknown keys {sorted(unknown)}")
        command = t.get("command")
        if isinstance(command, str):
            command = shlex.split(command)
        tasks.append(TaskSpec(
            name=str(t["name"]),
            action=t.get("action"),
            command=command,
            args=dict(t.get("args") or {}),
            depends_on=[str(d) for d in t.get("depends_on") or []],
            retries=int(t.get("retries", 0)),
            retry_delay=int(t.get("retry_delay", 0)),
        ))
    return DagSpec(str(doc["dag_id"]), tasks)


def load_dag(path: str | Path) -> DagSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_dag(yaml.safe_load(fh))


def _find_cycle(names: list[str], deps: dict[str, list[str]]) -> list[str] | None:
    color = {n: 0 for n in names}  # 0 new, 1 on stack, 2 done
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        color[n] = 1
        stack.append(n)
        for d in sorted(deps.get(n, [])):
            if d not in color:
                continue
            if color[d] == 1:
                return stack[stack.index(d):]
            if color[d] == 0:
                found = visit(d)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in sorted(names):
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return None


def validate_dag(spec: DagSpec, actions: dict[str, Action] | None = None) -> ValidationReport:
    report = ValidationReport()
    names = [t.name for t in spec.tasks]
    seen = set()
    for n in names:
        if n in seen:
            report.errors.append(f"duplicate task name {n!r}")
        seen.add(n)
    for t in spec.tasks:
        if (t.action is None) == (t.command is None):
            report.errors.append(f"task {t.name!r} needs exactly one of action or command")
        elif t.action is not None and actions is not None and t.action not in actions:
            report.errors.append(f"task {t.name!r}: unknown action {t.action!r}")
        if t.retries < 0:
            report.errors.append(f"task {t.name!r}: retries must be >= 0")
        for d in t.depends_on:
            if d == t.name:
                report.errors.append(f"task {t.name!r} depends on itself")
            elif d not in seen:
                report.errors.append(f"task {t.name!r} depends on unknown task {d!r}")
    deps = {t.name: [d for d in t.depends_on if d != t.name] for t in spec.tasks}
    cycle = _find_cycle(list(dict.fromkeys(names)), deps)
    if cycle:
        report.cycle = cycle
        report.errors.append("dependency cycle: " + " -> ".join(cycle + [cycle[0]]))
    return report


def topological_order(spec: DagSpec) -> list[str]:
    indegree = {t.name: len(set(t.depends_on)) for t in spec.tasks}
    dependents: dict[str, list[str]] = {t.name: [] for t in spec.tasks}
    for t in spec.tasks:
        for d in set(t.depends_on):
            dependents[d].append(t.name)
    ready = [n for n, k in indegree.items() if k == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for m in dependents[n]:
            indegree[m] -= 1
            if indegree[m] == 0:
                heapq.heappush(ready, m)
    if len(order) != len(spec.tasks):
        raise DagError("DAG has a cycle")
    return order


@dataclass
class TaskState:
    status: str = PENDING
    attempts: int = 0
    started_at: float | None = None
    finished_at: float | None = None
    error: str | None = None

    @property
    def duration(self) -> float | None:
        if self.started_at is None or self.finished_at is None:
            return None
        return self.finished_at - self.started_at


@dataclass
class RunState:
    run_id: str
    dag_id: str
    tasks: dict[str, TaskState]
    status: str = RUNNING
    completion_order: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "dag_id": self.dag_id,
            "status": self.status,
            "completion_order": self.completion_order,
            "tasks": {n: vars(s) for n, s in self.tasks.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunState":
        return cls(d["run_id"], d["dag_id"], {n: TaskState(**s) for n, s in d["tasks"].items()},
                   d["status"], list(d["completion_order"]))


def _write_state(state: RunState, runs_dir: Path) -> None:
    atomic_write_text(runs_dir / f"{state.run_id}.json",
                      json.dumps(state.to_dict(), indent=2, sort_keys=True))


def run_command(argv: list[str]) -> None:
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout).strip().splitlines()[-5:]
        raise RuntimeError(f"command exited {proc.returncode}: {' | '.join(tail)}")


def builtin_actions() -> dict[str, Action]:
    from . import tasks

    return dict(tasks.ACTIONS)


def new_run_id(dag_id: str) -> str:
    return f"{dag_id}-{time.strftime('%Y%m%dT%H%M%S')}-{os.getpid()}-{time.monotonic_ns() % 10**6:06d}"


def run_dag(spec: DagSpec, runs_dir: str | Path = ".stressdetect/runs",
            actions: dict[str, Action] | None = None, run_id: str | None = None,
            sleep: Callable[[float], None] = time.sleep) -> RunState:
    actions = builtin_actions() if actions is None else actions
    report = validate_dag(spec, actions)
    if not report.ok:
        raise DagError("; ".join(report.errors))
    runs_dir = Path(runs_dir)
    by_name = {t.name: t for t in spec.tasks}
    state = RunState(run_id or new_run_id(spec.dag_id), spec.dag_id,
                     {t.name: TaskState() for t in spec.tasks})
    _write_state(state, runs_dir)

    for name in topological_order(spec):
        task, ts = by_name[name], state.tasks[name]
        if any(state.tasks[d].status != SUCCESS for d in task.depends_on):
            ts.status = SKIPPED
            state.completion_order.append(name)
            _write_state(state, runs_dir)
            continue
        assert all(state.tasks[d].status == SUCCESS for d in task.depends_on)
        ts.status = RUNNING
        ts.started_at = time.time()
        _write_state(state, runs_dir)
        while True:
            ts.attempts += 1
            try:
                if task.command is not None:
                    run_command(task.command)
                else:
                    actions[task.action](dict(task.args))
                ts.status = SUCCESS
                ts.error = None
                break
            except Exception as exc:  # any task failure is recorded, not raised
                ts.error = f"{type(exc).__name__}: {exc}"
                if ts.attempts > task.retries:
                    ts.status = FAILED
                    break
                _write_state(state, runs_dir)
                if task.retry_delay:
                    sleep(task.retry_delay / 1000.0)
        ts.finished_at = time.time()
        state.completion_order.append(name)
        _write_state(state, runs_dir)

    state.status = SUCCESS if all(s.status == SUCCESS for s in state.tasks.values()) else FAILED
    _write_state(state, runs_dir)
    return state


def load_run(run_id: str, runs_dir: str | Path = ".stressdetect/runs") -> RunState:
    path = Path(runs_dir) / f"{run_id}.json"
    if not path.exists():
        raise DagError(f"unknown run id {run_id!r}")
    return RunState.from_dict(json.loads(path.read_text(encoding="utf-8")))


def status(run_id: str, runs_dir: str | Path = ".stressdetect/runs") -> str:
    state = load_run(run_id, runs_dir)
    from .evaluation import render_table

    rows = []
    for name, ts in state.tasks.items():
        dur = "" if ts.duration is None else f"{ts.duration:.3f}s"
        rows.append([name, ts.status, str(ts.attempts), dur, ts.error or ""])
    head = f"run {state.run_id}  dag {state.dag_id}  status {state.status}\n"
    return head + render_table(("task", "status", "attempts", "duration", "error"), rows)
