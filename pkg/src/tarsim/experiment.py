"""Experiment grids: expansion, sharding, dispatch, and result tables.

An experiment is a declarative cross-product over tasks, component choices,
hyperparameters, and repetitions. Each cell becomes a :class:`RunDescriptor`
with a stable hash and its own output directory; runs are fully independent,
so they can be spread over processes and nodes and resumed after a crash
without changing a single result value.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .components import build_component, combine
from .dataset import Corpus, LabelStore, ingest_sparse, load_labels, task_feeder
from .errors import ConfigurationError, DriftError, IntegrityError
from .evaluation import MetricRecord, parse_measure
from .ledger import Ledger, score_dump_path
from .rng import derive_seed
from .workflow import (
    LEDGER_FILENAME,
    METRICS_FILENAME,
    OnePhaseWorkflow,
    TwoPhaseWorkflow,
    WorkflowConfig,
    compute_metrics,
    compute_run_hash,
    parse_cutoff_policy,
)

__all__ = [
    "ExperimentSpec",
    "RunDescriptor",
    "load_spec",
    "expand_grid",
    "shard",
    "dispatch",
    "DispatchResult",
    "RunReport",
    "results_table",
    "write_results_csv",
]

ROLE_KEYS = ("ranker", "sampler", "labeler", "stopping")
MANIFEST_FILENAME = "runs.json"
PARAM_COLUMNS = (
    "run", "run_hash", "task", "workflow", "batch_size", "repetition", "seed",
    "ranker", "sampler", "labeler", "stopping",
    "round", "n_annotated", "n_pos_annotated", "recall",
)


@dataclass
class ExperimentSpec:
    """Declarative description of an experiment grid."""

    output_dir: Path
    corpus_path: Path
    labels_path: Path
    categories: list[str]
    components: dict[str, list[dict]]
    batch_sizes: list[int]
    seed_docs: list[int] = field(default_factory=list)
    measures: list[str] = field(default_factory=list)
    workflow: str = "one-phase"
    random_seed: int = 0
    max_round_exec: int | None = None
    save_scores: bool = False
    repetitions: int = 1
    target_recall: float | None = None
    cutoff_policy: str = "oracle"

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        self.corpus_path = Path(self.corpus_path)
        self.labels_path = Path(self.labels_path)
        if self.workflow not in ("one-phase", "two-phase"):
            raise ConfigurationError(f"workflow must be one-phase or two-phase, got {self.workflow!r}")
        if self.workflow == "two-phase":
            if self.target_recall is None:
                raise ConfigurationError("two-phase workflow requires target_recall")
            parse_cutoff_policy(self.cutoff_policy)
        for name, axis in (
            ("categories", self.categories),
            ("batch_size", self.batch_sizes),
        ):
            if not axis:
                raise ConfigurationError(f"empty grid axis: {name}")
            if len(set(axis)) != len(axis):
                raise ConfigurationError(
                    f"duplicate entries in grid axis {name}; use repetitions for repeats"
                )
        for key in ROLE_KEYS:
            alternatives = self.components.get(key)
            if not alternatives:
                raise ConfigurationError(f"empty grid axis: components.{key}")
            canon = [json.dumps(a, sort_keys=True) for a in alternatives]
            if len(set(canon)) != len(canon):
                raise ConfigurationError(f"duplicate alternatives in components.{key}")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        for m in self.measures:
            parse_measure(m)


def load_spec(path: str | Path) -> ExperimentSpec:
    """Read an :class:`ExperimentSpec` from a TOML config file.

    Relative paths in the file are resolved against the file's directory.
    """
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}")

    def _need(key, table=raw, where="config"):
        if key not in table:
            raise ConfigurationError(f"{path}: missing {where} key {key!r}")
        return table[key]

    dataset = _need("dataset")
    components_raw = _need("components")
    components = {}
    for key in ROLE_KEYS:
        value = _need(key, components_raw, "components")
        components[key] = list(value) if isinstance(value, list) else [value]

    batch_size = raw.get("batch_size", [])
    batch_sizes = list(batch_size) if isinstance(batch_size, list) else [batch_size]

    base = path.parent

    def _resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    return ExperimentSpec(
        output_dir=_resolve(_need("output_dir")),
        corpus_path=_resolve(_need("corpus", dataset, "dataset")),
        labels_path=_resolve(_need("labels", dataset, "dataset")),
        categories=list(_need("categories", dataset, "dataset")),
        components=components,
        batch_sizes=batch_sizes,
        seed_docs=list(raw.get("seed_docs", [])),
        measures=list(raw.get("measures", [])),
        workflow=raw.get("workflow", "one-phase"),
        random_seed=int(raw.get("random_seed", 0)),
        max_round_exec=raw.get("max_round_exec"),
        save_scores=bool(raw.get("save_scores", False)),
        repetitions=int(raw.get("repetitions", 1)),
        target_recall=raw.get("target_recall"),
        cutoff_policy=raw.get("cutoff_policy", "oracle"),
    )


@dataclass(frozen=True)
class RunDescriptor:
    """One fully resolved cell of the experiment grid."""

    index: int
    category: str
    workflow: str
    component_specs: dict[str, dict]
    component_names: dict[str, str]
    batch_size: int
    repetition: int
    seed: int
    run_hash: str
    dirname: str

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _load_dataset(corpus_path: Path, labels_path: Path) -> tuple[Corpus, LabelStore]:
    key = (str(corpus_path), str(labels_path))
    cached = _DATASET_CACHE.get(key)
    if cached is None:
        cached = (ingest_sparse(corpus_path), load_labels(labels_path))
        _DATASET_CACHE[key] = cached
    return cached


_DATASET_CACHE: dict[tuple[str, str], tuple[Corpus, LabelStore]] = {}


def _build_setting(component_specs: dict[str, dict]):
    return combine([build_component(component_specs[key]) for key in ROLE_KEYS])


def _workflow_config(spec: ExperimentSpec, batch_size: int, seed: int,
                     checkpoint_every: int | None = None) -> WorkflowConfig:
    return WorkflowConfig(
        seed_docs=tuple(spec.seed_docs),
        batch_size=batch_size,
        random_seed=seed,
        max_round_exec=spec.max_round_exec,
        save_scores=spec.save_scores,
        checkpoint_every=checkpoint_every,
    )


def expand_grid(spec: ExperimentSpec) -> list[RunDescriptor]:
    """Cross the grid axes in canonical order: tasks, then components, then
    batch sizes, then repetitions. Hash collisions between distinct cells
    are treated as fatal."""
    corpus, labels = _load_dataset(spec.corpus_path, spec.labels_path)
    tasks = {t.category: t for t in task_feeder(corpus, labels, list(dict.fromkeys(spec.categories)))}

    component_combos = list(itertools.product(*(spec.components[key] for key in ROLE_KEYS)))
    descriptors: list[RunDescriptor] = []
    seen: dict[str, tuple] = {}
    index = 0
    for category in spec.categories:
        task = tasks[category]
        for combo in component_combos:
            component_specs = dict(zip(ROLE_KEYS, combo))
            setting = _build_setting(component_specs)
            names = dict(zip(ROLE_KEYS, (c.describe() for c in (
                setting.ranker, setting.sampler, setting.labeler, setting.stopping_rule))))
            for batch_size in spec.batch_sizes:
                for repetition in range(spec.repetitions):
                    token = json.dumps(
                        {
                            "task": task.identity(),
                            "category": category,
                            "workflow": spec.workflow,
                            "components": component_specs,
                            "batch_size": batch_size,
                            "repetition": repetition,
                            "seed_docs": list(spec.seed_docs),
                            "max_round_exec": spec.max_round_exec,
                        },
                        sort_keys=True,
                    )
                    seed = derive_seed(spec.random_seed, token)
                    config = _workflow_config(spec, batch_size, seed)
                    extra = None
                    if spec.workflow == "two-phase":
                        extra = {
                            "target_recall": spec.target_recall,
                            "cutoff_policy": list(parse_cutoff_policy(spec.cutoff_policy)),
                        }
                    run_hash = compute_run_hash(spec.workflow, config, setting, task, extra)
                    identity = (token, seed)
                    if run_hash in seen and seen[run_hash] != identity:
                        raise IntegrityError(f"run hash collision at {run_hash}")
                    seen[run_hash] = identity
                    descriptors.append(
                        RunDescriptor(
                            index=index,
                            category=category,
                            workflow=spec.workflow,
                            component_specs=component_specs,
                            component_names=names,
                            batch_size=batch_size,
                            repetition=repetition,
                            seed=seed,
                            run_hash=run_hash,
                            dirname=f"run-{index:04d}-{run_hash[:10]}",
                        )
                    )
                    index += 1
    return descriptors


def shard(runs: Sequence[RunDescriptor], n_nodes: int, node_id: int) -> list[RunDescriptor]:
    """Round-robin assignment by run index; shards partition the run list."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if not 0 <= node_id < n_nodes:
        raise ValueError(f"node_id must be in [0, {n_nodes}), got {node_id}")
    return [r for r in runs if r.index % n_nodes == node_id]


@dataclass(frozen=True)
class RunReport:
    index: int
    dirname: str
    status: str  # completed | skipped | failed
    message: str | None = None


@dataclass
class DispatchResult:
    reports: list[RunReport]
    header: list[str]
    rows: list[list]

    @property
    def ok(self) -> bool:
        return all(r.status != "failed" for r in self.reports)


def _clear_run_artifacts(run_dir: Path):
    for name in (LEDGER_FILENAME, METRICS_FILENAME, "done.json", "error.json", "phase2.json"):
        (run_dir / name).unlink(missing_ok=True)
    for p in run_dir.glob("scores.*.bin"):
        p.unlink()


def _truncate_metrics(path: Path, n_rounds: int):
    """Drop metric records for rounds the checkpoint does not cover."""
    if not path.exists():
        return
    kept = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["round"] < n_rounds:
                kept.append(line if line.endswith("\n") else line + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(kept)


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
                    encoding="utf-8")


def _execute_run(spec: ExperimentSpec, desc: RunDescriptor, resume: bool,
                 dump_frequency: int | None, progress: bool,
                 progress_prefix: str = "") -> RunReport:
    run_dir = spec.output_dir / desc.dirname
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        if resume and (run_dir / "done.json").exists():
            return RunReport(desc.index, desc.dirname, "skipped")

        corpus, labels = _load_dataset(spec.corpus_path, spec.labels_path)
        task = next(task_feeder(corpus, labels, [desc.category]))
        setting = _build_setting(desc.component_specs)
        config = _workflow_config(spec, desc.batch_size, desc.seed, checkpoint_every=dump_frequency)
        if spec.workflow == "two-phase":
            cls, kwargs = TwoPhaseWorkflow, {
                "target_recall": spec.target_recall,
                "cutoff_policy": spec.cutoff_policy,
            }
        else:
            cls, kwargs = OnePhaseWorkflow, {}

        if resume and (run_dir / LEDGER_FILENAME).exists():
            wf = cls.resume(task, setting, config, run_dir, **kwargs)
            _truncate_metrics(run_dir / METRICS_FILENAME, wf.ledger.n_rounds)
        else:
            _clear_run_artifacts(run_dir)
            wf = cls(task, setting, config, out_dir=run_dir, **kwargs)
        if wf.run_hash != desc.run_hash:
            raise DriftError(
                f"descriptor hash {desc.run_hash[:12]} does not match workflow hash {wf.run_hash[:12]}"
            )

        _write_json(run_dir / "run.json", {
            "index": desc.index,
            "run_hash": desc.run_hash,
            "task": desc.category,
            "workflow": desc.workflow,
            "batch_size": desc.batch_size,
            "repetition": desc.repetition,
            "seed": desc.seed,
            "components": desc.component_names,
            "component_specs": desc.component_specs,
            "measures": spec.measures,
            "seed_docs": list(spec.seed_docs),
            "max_round_exec": spec.max_round_exec,
            "save_scores": spec.save_scores,
            "random_seed_base": spec.random_seed,
            "target_recall": spec.target_recall,
            "cutoff_policy": spec.cutoff_policy if spec.workflow == "two-phase" else None,
        })
        _write_json(run_dir / "task.json", {
            "category": task.category,
            "doc_ids": [int(d) for d in task.corpus.doc_ids],
            "gold": [int(g) for g in task.gold],
        })

        measures = [parse_measure(m) for m in spec.measures]
        with open(run_dir / METRICS_FILENAME, "a", encoding="utf-8") as mf:
            for outcome in wf:
                if outcome.scores is not None:
                    rec = compute_metrics(task, outcome.ledger, outcome.scores, measures,
                                          round_index=outcome.round)
                    mf.write(rec.to_json() + "\n")
                    mf.flush()
                if progress:
                    print(
                        f"{progress_prefix}Round {outcome.round}: found "
                        f"{outcome.ledger.n_pos_annotated} positives in total",
                        flush=True,
                    )
        if spec.workflow == "two-phase":
            wf.phase_two()
        _write_json(run_dir / "done.json", {
            "rounds": wf.ledger.n_rounds,
            "stopped": wf.stopped,
            "run_hash": desc.run_hash,
        })
        (run_dir / "error.json").unlink(missing_ok=True)
        return RunReport(desc.index, desc.dirname, "completed")
    except Exception as exc:  # noqa: BLE001 - a failed run must not abort siblings
        try:
            _write_json(run_dir / "error.json", {"error": f"{type(exc).__name__}: {exc}"})
        except OSError:
            pass
        return RunReport(desc.index, desc.dirname, "failed", f"{type(exc).__name__}: {exc}")


def _measure_columns(measures: Sequence[str]) -> list[str]:
    cols = []
    for m in measures:
        cols.append(f"{m}/full")
        cols.append(f"{m}/unreviewed")
    return cols


def _rows_for_run(run_dir: Path, run_info: dict, measures: Sequence[str]) -> list[list]:
    metrics_path = run_dir / METRICS_FILENAME
    rows = []
    if not metrics_path.exists():
        return rows
    expected = set(_measure_columns(measures))
    with open(metrics_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = MetricRecord.from_json(line)
            if set(rec.values) != expected:
                raise ConfigurationError(
                    f"run {run_dir.name}: metrics schema {sorted(rec.values)} "
                    f"does not match measures {sorted(expected)}"
                )
            row = [
                run_info["index"], run_info["run_hash"], run_info["task"],
                run_info["workflow"], run_info["batch_size"], run_info["repetition"],
                run_info["seed"],
                run_info["components"]["ranker"], run_info["components"]["sampler"],
                run_info["components"]["labeler"], run_info["components"]["stopping"],
                rec.round, rec.n_annotated, rec.n_pos_annotated, rec.recall,
            ]
            row.extend(rec.values[c] for c in _measure_columns(measures))
            rows.append(row)
    return rows


def write_manifest(spec: ExperimentSpec, runs: Sequence[RunDescriptor]):
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    payload = {"measures": list(spec.measures), "runs": [r.as_dict() for r in runs]}
    tmp = spec.output_dir / (MANIFEST_FILENAME + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
                   encoding="utf-8")
    os.replace(tmp, spec.output_dir / MANIFEST_FILENAME)


def dispatch(spec: ExperimentSpec, runs: Sequence[RunDescriptor], n_processes: int = 1,
             resume: bool = False, dump_frequency: int | None = None,
             progress: bool = False) -> DispatchResult:
    """Execute a shard with at most ``n_processes`` runs in flight.

    Every run checkpoints every ``dump_frequency`` rounds. With ``resume``,
    finished runs are skipped and interrupted ones continue from their
    checkpoints. A failed run records its error in its directory without
    aborting siblings. The returned table is ordered by (run index, round)
    regardless of completion order.
    """
    if n_processes < 1:
        raise ValueError("n_processes must be >= 1")
    write_manifest(spec, expand_grid(spec))

    # prefix progress lines with the run directory only when runs share the console
    prefix = (lambda d: f"[{d.dirname}] ") if len(runs) > 1 else (lambda d: "")
    if n_processes == 1 or len(runs) <= 1:
        reports = [
            _execute_run(spec, d, resume, dump_frequency, progress, prefix(d)) for d in runs
        ]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_processes) as pool:
            futures = [
                pool.submit(_execute_run, spec, d, resume, dump_frequency, progress, prefix(d))
                for d in runs
            ]
            reports = [f.result() for f in futures]
    reports.sort(key=lambda r: r.index)

    header = list(PARAM_COLUMNS) + _measure_columns(spec.measures)
    rows = []
    for desc in sorted(runs, key=lambda d: d.index):
        run_dir = spec.output_dir / desc.dirname
        info_path = run_dir / "run.json"
        if info_path.exists():
            info = json.loads(info_path.read_text(encoding="utf-8"))
            rows.extend(_rows_for_run(run_dir, info, spec.measures))
    return DispatchResult(reports=reports, header=header, rows=rows)


def results_table(output_dir: str | Path) -> tuple[list[str], list[list]]:
    """Aggregate every run's per-round metrics under ``output_dir``.

    One row per (run, round): parameter columns first, then one column per
    (measure, view). Row and column order are deterministic, so re-exporting
    without re-running is byte-identical.
    """
    output_dir = Path(output_dir)
    manifest_path = output_dir / MANIFEST_FILENAME
    if not manifest_path.exists():
        return list(PARAM_COLUMNS), []
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    measures = manifest["measures"]
    header = list(PARAM_COLUMNS) + _measure_columns(measures)
    rows = []
    for entry in sorted(manifest["runs"], key=lambda e: e["index"]):
        run_dir = output_dir / entry["dirname"]
        info_path = run_dir / "run.json"
        if not info_path.exists():
            continue
        info = json.loads(info_path.read_text(encoding="utf-8"))
        if info["measures"] != measures:
            raise ConfigurationError(
                f"run {run_dir.name}: measures {info['measures']} differ from manifest {measures}"
            )
        rows.extend(_rows_for_run(run_dir, info, measures))
    return header, rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(header: list[str], rows: list[list], path: str | Path):
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def load_run_dir(run_dir: str | Path):
    """Read a run directory: (run info, task payload, ledger, score loader)."""
    run_dir = Path(run_dir)
    info_path = run_dir / "run.json"
    ledger_path = run_dir / LEDGER_FILENAME
    if not ledger_path.exists():
        raise ConfigurationError(f"{run_dir} has no {LEDGER_FILENAME}")
    info = json.loads(info_path.read_text(encoding="utf-8")) if info_path.exists() else {}
    task_path = run_dir / "task.json"
    task = json.loads(task_path.read_text(encoding="utf-8")) if task_path.exists() else None
    ledger = Ledger.restore(ledger_path)

    def scores_by_round(r: int):
        p = score_dump_path(run_dir, r)
        if not p.exists():
            return None
        from .ledger import read_score_dump

        return read_score_dump(p)

    return info, task, ledger, scores_by_round
