"""Cost-dynamics plots: stacked per-round review costs as self-contained SVG.

One panel per (run, cost structure). Each round's bar stacks the four cost
buckets; rounds past the cheapest stopping point are faded, and a dashed
vertical line marks the first round whose phase-1 recall reaches the target.
Every number in the figure is also written to a companion CSV so the plot is
exactly reproducible without parsing SVG.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .evaluation import CostStructure, CostTrajectory, cost_trajectory
from .experiment import load_run_dir
from .ledger import Ledger

__all__ = ["PlotSpec", "load_run_states", "plot_cost_dynamics"]

# Okabe-Ito colorblind-safe palette: phase-1 positive/negative, phase-2 positive/negative.
BUCKET_COLORS = ("#0072B2", "#E69F00", "#009E73", "#CC79A7")
BUCKET_NAMES = ("phase1_pos", "phase1_neg", "phase2_pos", "phase2_neg")
HATCH_IDS = ("hatch-diag", "hatch-dot", "hatch-cross", "hatch-horiz")
FADE_OPACITY = 0.35


@dataclass
class PlotSpec:
    """What to plot: labeled run directories x cost structures."""

    runs: list[tuple[str, Path]]
    cost_structures: list[CostStructure]
    output: Path
    target_recall: float = 0.8
    y_thousands: bool = False
    with_hatches: bool = False
    panel_width: int = 300
    panel_height: int = 210

    def __post_init__(self):
        if not self.runs:
            raise ConfigurationError("at least one run required")
        if not self.cost_structures:
            raise ConfigurationError("at least one cost structure required")
        self.output = Path(self.output)


def load_run_states(run_dir: str | Path):
    """Per-round (frozen ledger, scores) states plus gold labels for a run.

    Every round that trained a model must have its score dump; otherwise the
    cost model cannot rank the unreviewed documents for that round. An
    untrained prefix (for example an empty seed round) is skipped; the
    returned ``first_round`` is the round number of the first state.
    """
    run_dir = Path(run_dir)
    _, task, ledger, scores_by_round = load_run_dir(run_dir)
    if task is None:
        raise ConfigurationError(f"{run_dir} has no task.json; cannot recover gold labels")
    gold = np.asarray(task["gold"], dtype=bool)
    doc_ids = np.asarray(task["doc_ids"], dtype=np.int64)

    by_round: dict[int, list[tuple[int, bool]]] = {}
    for doc_id, (rnd, label) in ledger._annotations.items():
        by_round.setdefault(rnd, []).append((doc_id, label))
    shadow = Ledger(run_hash=ledger.run_hash)
    states = []
    first_round = 0
    for r in range(ledger.n_rounds):
        shadow.new_round()
        recs = by_round.get(r, [])
        shadow.annotate([d for d, _ in recs], [lab for _, lab in recs])
        scores = scores_by_round(r)
        if scores is None:
            if shadow.n_annotated == 0 and not states:
                first_round = r + 1
                continue
            raise ConfigurationError(
                f"{run_dir} lacks scores for round {r}; rerun with save_scores enabled"
            )
        states.append((shadow.freeze(), scores))
    if not states:
        raise ConfigurationError(f"{run_dir} has no scored rounds to plot")
    return states, gold, doc_ids, first_round


def _nice_step(span: float, target_ticks: int = 5) -> float:
    if span <= 0:
        return 1.0
    raw = span / target_ticks
    mag = 10 ** np.floor(np.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if mult * mag >= raw:
            return float(mult * mag)
    return float(10 * mag)


def _fmt_tick(value: float, thousands: bool) -> str:
    v = value / 1000.0 if thousands else value
    if float(v).is_integer():
        return str(int(v))
    return f"{v:g}"


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _hatch_defs() -> str:
    return (
        '<defs>'
        '<pattern id="hatch-diag" width="6" height="6" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="6" '
        'stroke="black" stroke-width="1"/></pattern>'
        '<pattern id="hatch-dot" width="6" height="6" patternUnits="userSpaceOnUse">'
        '<circle cx="3" cy="3" r="1" fill="black"/></pattern>'
        '<pattern id="hatch-cross" width="8" height="8" patternUnits="userSpaceOnUse">'
        '<path d="M0 0L8 8M8 0L0 8" stroke="black" stroke-width="0.8"/></pattern>'
        '<pattern id="hatch-horiz" width="6" height="6" patternUnits="userSpaceOnUse">'
        '<line x1="0" y1="3" x2="6" y2="3" stroke="black" stroke-width="1"/></pattern>'
        '</defs>'
    )


def _panel_svg(x0: float, y0: float, w: float, h: float, title: str,
               traj: CostTrajectory, y_thousands: bool, with_hatches: bool,
               first_round: int = 0) -> list[str]:
    left, bottom, top = 46.0, 26.0, 18.0
    plot_w, plot_h = w - left - 8.0, h - bottom - top
    n = len(traj.rounds)
    totals = traj.totals()
    y_max = max(max(totals), 1e-12)
    step = _nice_step(y_max)
    y_top = step * np.ceil(y_max / step)

    def sx(i: float) -> float:
        return x0 + left + plot_w * i / n

    def sy(v: float) -> float:
        return y0 + top + plot_h * (1.0 - v / y_top)

    parts = [f'<text x="{x0 + left + plot_w / 2:.1f}" y="{y0 + 12:.1f}" '
             f'text-anchor="middle" font-size="11">{_svg_escape(title)}</text>']
    # axes
    parts.append(
        f'<path d="M{x0 + left:.1f} {y0 + top:.1f}V{y0 + top + plot_h:.1f}'
        f'H{x0 + left + plot_w:.1f}" fill="none" stroke="black" stroke-width="1"/>'
    )
    tick = 0.0
    while tick <= y_top + 1e-9:
        parts.append(
            f'<line x1="{x0 + left - 3:.1f}" y1="{sy(tick):.1f}" x2="{x0 + left:.1f}" '
            f'y2="{sy(tick):.1f}" stroke="black" stroke-width="1"/>'
            f'<text x="{x0 + left - 5:.1f}" y="{sy(tick) + 3:.1f}" text-anchor="end" '
            f'font-size="8">{_fmt_tick(tick, y_thousands)}</text>'
        )
        tick += step

    bar_w = max(plot_w / n * 0.8, 0.5)
    for r, bk in enumerate(traj.rounds):
        cx = sx(r + 0.5)
        base = 0.0
        faded = r > traj.optimal_round
        for value, color, hatch in zip(
            (bk.phase1_pos, bk.phase1_neg, bk.phase2_pos, bk.phase2_neg),
            BUCKET_COLORS,
            HATCH_IDS,
        ):
            if value <= 0:
                continue
            y_hi, y_lo = sy(base + value), sy(base)
            opacity = f' opacity="{FADE_OPACITY}"' if faded else ""
            rect = (f'x="{cx - bar_w / 2:.2f}" y="{y_hi:.2f}" '
                    f'width="{bar_w:.2f}" height="{y_lo - y_hi:.2f}"')
            parts.append(f'<rect {rect} fill="{color}"{opacity}/>')
            if with_hatches:
                parts.append(f'<rect {rect} fill="url(#{hatch})"{opacity}/>')
            base += value
    if traj.target_round is not None:
        tx = sx(traj.target_round + 0.5)
        parts.append(
            f'<line x1="{tx:.2f}" y1="{y0 + top:.1f}" x2="{tx:.2f}" '
            f'y2="{y0 + top + plot_h:.1f}" stroke="grey" stroke-width="1" '
            'stroke-dasharray="4,3"/>'
        )
    # x tick labels: first, optimal, last round
    for r in sorted({0, traj.optimal_round, n - 1}):
        parts.append(
            f'<text x="{sx(r + 0.5):.1f}" y="{y0 + top + plot_h + 11:.1f}" '
            f'text-anchor="middle" font-size="8">{r + first_round}</text>'
        )
    return parts


def plot_cost_dynamics(spec: PlotSpec) -> tuple[Path, Path]:
    """Write the SVG figure and its companion CSV; returns both paths."""
    panels: list[tuple[str, CostStructure, CostTrajectory, int]] = []
    for label, run_dir in spec.runs:
        states, gold, doc_ids, first_round = load_run_states(run_dir)
        for cs in spec.cost_structures:
            traj = cost_trajectory(states, gold, doc_ids, spec.target_recall, cs)
            panels.append((label, cs, traj, first_round))

    n_rows, n_cols = len(spec.runs), len(spec.cost_structures)
    legend_h = 28
    width = n_cols * spec.panel_width + 10
    height = n_rows * spec.panel_height + legend_h + 10

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        _hatch_defs(),
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for idx, (label, cs, traj, first_round) in enumerate(panels):
        row, col = divmod(idx, n_cols)
        title = f"{label} ({cs})"
        parts.extend(
            _panel_svg(5 + col * spec.panel_width, 5 + row * spec.panel_height,
                       spec.panel_width, spec.panel_height, title, traj,
                       spec.y_thousands, spec.with_hatches, first_round)
        )
    ly = n_rows * spec.panel_height + 18
    lx = 10.0
    for name, color, hatch in zip(BUCKET_NAMES, BUCKET_COLORS, HATCH_IDS):
        parts.append(f'<rect x="{lx:.0f}" y="{ly - 9}" width="12" height="10" fill="{color}"/>')
        if spec.with_hatches:
            parts.append(
                f'<rect x="{lx:.0f}" y="{ly - 9}" width="12" height="10" fill="url(#{hatch})"/>'
            )
        parts.append(f'<text x="{lx + 16:.0f}" y="{ly}" font-size="10">{name}</text>')
        lx += 16 + 7 * len(name) + 18
    if spec.y_thousands:
        parts.append(f'<text x="{lx:.0f}" y="{ly}" font-size="10">y axis: thousands</text>')
    parts.append("</svg>")

    spec.output.parent.mkdir(parents=True, exist_ok=True)
    spec.output.write_text("\n".join(parts) + "\n", encoding="utf-8")

    csv_path = spec.output.with_suffix(".csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([
            "run", "cost_structure", "round",
            *BUCKET_NAMES, "total", "faded", "optimal_round", "target_round",
        ])
        for label, cs, traj, first_round in panels:
            for r, bk in enumerate(traj.rounds):
                writer.writerow([
                    label, str(cs), r + first_round,
                    repr(bk.phase1_pos), repr(bk.phase1_neg),
                    repr(bk.phase2_pos), repr(bk.phase2_neg), repr(bk.total),
                    int(r > traj.optimal_round), traj.optimal_round + first_round,
                    "" if traj.target_round is None else traj.target_round + first_round,
                ])
    return spec.output, csv_path
