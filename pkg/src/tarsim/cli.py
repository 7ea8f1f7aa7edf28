"""Command-line surface: run experiment grids, replay runs, export results,
and draw cost-dynamics plots."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .components import build_component
from .errors import TarSimError
from .evaluation import CostStructure
from .experiment import (
    dispatch,
    expand_grid,
    load_run_dir,
    load_spec,
    results_table,
    shard,
    write_results_csv,
)
from .plotting import PlotSpec, plot_cost_dynamics
from .workflow import replay

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tarsim",
        description="Deterministic, resumable simulation of review workflows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment grid from a config file")
    p_run.add_argument("config", help="TOML experiment config")
    p_run.add_argument("--processes", type=int, default=1)
    p_run.add_argument("--nodes", type=int, default=1)
    p_run.add_argument("--node-id", type=int, default=0)
    p_run.add_argument("--resume", action="store_true")
    p_run.add_argument("--dump-frequency", type=int, default=None,
                       help="checkpoint the ledger every K rounds")

    p_replay = sub.add_parser("replay", help="frozen-mode evaluation of a finished run")
    p_replay.add_argument("run_dir")
    p_replay.add_argument("--measures", nargs="*", default=None,
                          help="measure strings; defaults to the run's own measures")
    p_replay.add_argument("--stopping", default=None,
                          help="try a stopping rule, e.g. quant:target=0.9")

    p_export = sub.add_parser("export", help="aggregate per-round metrics into a CSV")
    p_export.add_argument("output_dir")
    p_export.add_argument("--out", default=None, help="CSV path (default: <output_dir>/results.csv)")

    p_plot = sub.add_parser("plot", help="stacked cost-dynamics plot (SVG + CSV)")
    p_plot.add_argument("--runs", nargs="+", required=True, metavar="LABEL=RUN_DIR")
    p_plot.add_argument("--cost_structures", nargs="+", required=True, metavar="A-B-C-D")
    p_plot.add_argument("--target_recall", type=float, default=0.8)
    p_plot.add_argument("--y_thousands", action="store_true")
    p_plot.add_argument("--with_hatches", action="store_true")
    p_plot.add_argument("--output", default="cost-dynamics.svg")
    return parser


def _cmd_run(args) -> int:
    spec = load_spec(args.config)
    if args.nodes < 1 or not 0 <= args.node_id < args.nodes:
        raise TarSimError(f"--node-id must be in [0, {args.nodes}), got {args.node_id}")
    runs = expand_grid(spec)
    mine = shard(runs, args.nodes, args.node_id)
    result = dispatch(
        spec, mine,
        n_processes=args.processes,
        resume=args.resume,
        dump_frequency=args.dump_frequency,
        progress=True,
    )
    for report in result.reports:
        if report.status == "failed":
            print(f"run {report.dirname} failed: {report.message}", file=sys.stderr)
    header, rows = results_table(spec.output_dir)
    csv_path = spec.output_dir / "results.csv"
    write_results_csv(header, rows, csv_path)
    print(f"results: {csv_path}")
    return 0 if result.ok else 1


_STOPPING_ALIASES = {"target": "target_recall"}


def _parse_param_value(text: str):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_stopping_spec(text: str) -> dict:
    """Parse ``name[:key=value,key=value...]`` into a component spec."""
    name, _, rest = text.partition(":")
    spec = {"name": name.strip()}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise TarSimError(f"bad stopping parameter {item!r}; expected key=value")
            key = _STOPPING_ALIASES.get(key.strip(), key.strip())
            spec[key] = _parse_param_value(value.strip())
    return spec


class _ReplayCorpus:
    """Just enough corpus surface for stopping rules evaluated in replay."""

    def __init__(self, doc_ids: np.ndarray):
        self.doc_ids = doc_ids
        self.n_docs = int(doc_ids.size)


def _cmd_replay(args) -> int:
    info, task, ledger, scores_by_round = load_run_dir(args.run_dir)
    measure_names = args.measures if args.measures is not None else info.get("measures", [])
    if task is None and (measure_names or args.stopping):
        raise TarSimError(f"{args.run_dir} has no task.json; cannot evaluate measures")

    gold = np.asarray(task["gold"], dtype=bool) if task else None
    doc_ids = np.asarray(task["doc_ids"], dtype=np.int64) if task else None
    rule = None
    request_labels = None
    corpus = None
    if args.stopping:
        rule = build_component(parse_stopping_spec(args.stopping))
        corpus = _ReplayCorpus(doc_ids)
        gold_by_id = dict(zip(doc_ids.tolist(), gold.tolist()))

        def request_labels(ids):
            return np.array([gold_by_id[int(d)] for d in ids], dtype=bool)

    first_fired = None
    for rr in replay(
        ledger,
        scores_by_round=scores_by_round,
        measures=measure_names,
        gold=gold,
        doc_ids=doc_ids,
        stopping_rule=rule,
        corpus=corpus,
        random_seed=int(info.get("seed", 0)),
        request_labels=request_labels,
    ):
        fields = []
        if rr.record is not None:
            fields.extend(f"{k}={v}" for k, v in rr.record.values.items())
        if rr.stopped is not None:
            fields.append(f"stop={rr.stopped}")
            if rr.stopped and first_fired is None:
                first_fired = rr.round
        print(f"Round {rr.round}: " + " ".join(fields))
    if rule is not None:
        if first_fired is None:
            print("Rule never fired")
        else:
            print(f"First firing round: {first_fired}")
    return 0


def _cmd_export(args) -> int:
    header, rows = results_table(args.output_dir)
    out = Path(args.out) if args.out else Path(args.output_dir) / "results.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_results_csv(header, rows, out)
    print(f"results: {out}")
    return 0


def _cmd_plot(args) -> int:
    runs = []
    for item in args.runs:
        label, sep, run_dir = item.partition("=")
        if not sep:
            raise TarSimError(f"--runs entries must be LABEL=RUN_DIR, got {item!r}")
        runs.append((label, Path(run_dir)))
    spec = PlotSpec(
        runs=runs,
        cost_structures=[CostStructure.parse(cs) for cs in args.cost_structures],
        output=Path(args.output),
        target_recall=args.target_recall,
        y_thousands=args.y_thousands,
        with_hatches=args.with_hatches,
    )
    svg_path, csv_path = plot_cost_dynamics(spec)
    print(f"plot: {svg_path}")
    print(f"data: {csv_path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "replay": _cmd_replay,
        "export": _cmd_export,
        "plot": _cmd_plot,
    }
    try:
        return handlers[args.command](args)
    except TarSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
