"""Efficiency metrics, multi-trial aggregation, CSV emission, and SVG charts.

The efficiency score of a run is its test accuracy divided by the fraction
of the training pool it consumed; relative efficiency normalizes by the
score of the full-training baseline. Charts are emitted as self-contained
SVG 1.1 polyline documents with no plotting dependency, so identical
reports always produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .episodic import EpisodeRecord


# ---------------------------------------------------------------------------
# Efficiency
# ---------------------------------------------------------------------------

def efficiency(test_accuracy: float, used_fraction: float) -> float:
    """Efficiency score: accuracy per unit of training data used."""
    if not 0.0 < used_fraction <= 1.0:
        raise ValueError(f"used_fraction must be in (0, 1], got {used_fraction}")
    if not 0.0 <= test_accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {test_accuracy}")
    return test_accuracy / used_fraction


@dataclass(frozen=True)
class EfficiencyScore:
    xi: float
    xi_baseline: float
    relative: float

    def __post_init__(self):
        if self.xi <= 0 or self.xi_baseline <= 0:
            raise ValueError("efficiency scores must be positive")


def efficiency_score(test_accuracy: float, used_fraction: float, xi_baseline: float) -> EfficiencyScore:
    xi = efficiency(test_accuracy, used_fraction)
    return EfficiencyScore(xi, xi_baseline, xi / xi_baseline)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialReport:
    """Per-episode means and sample stddevs over a strategy's trials."""

    strategy_id: int
    n_trials: int
    episodes: tuple[int, ...]
    mean_accuracy: tuple[float, ...]
    std_accuracy: tuple[float, ...]
    mean_acquired: tuple[float, ...]
    std_acquired: tuple[float, ...]
    mean_accumulated: tuple[float, ...]
    mean_used_fraction: tuple[float, ...]
    final_efficiency: EfficiencyScore | None = None


def aggregate(
    strategy_id: int,
    trials: Mapping[int, Sequence[EpisodeRecord]],
    xi_baseline: float | None = None,
) -> TrialReport:
    """Mean and sample stddev per episode over trials (keyed by trial id).

    Trials are processed in sorted key order, so the report does not depend
    on insertion order. All trials must have the same episode count.
    """
    if not trials:
        raise ValueError("no trials to aggregate")
    keys = sorted(trials)
    runs = [trials[k] for k in keys]
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ValueError(f"ragged episode counts across trials: {sorted(lengths)}")
    episodes = tuple(rec.episode for rec in runs[0])

    def stats(get):
        m = np.array([[get(rec) for rec in run] for run in runs], dtype=np.float64)
        mean = m.mean(axis=0)
        std = m.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros(m.shape[1])
        return tuple(float(v) for v in mean), tuple(float(v) for v in std)

    mean_acc, std_acc = stats(lambda r: r.final_test_accuracy)
    mean_acq, std_acq = stats(lambda r: r.acquired_count)
    mean_accum, _ = stats(lambda r: r.accumulated_count)
    mean_frac, _ = stats(lambda r: r.used_fraction)

    final_eff = None
    if xi_baseline is not None and mean_acc[-1] > 0:
        final_eff = efficiency_score(mean_acc[-1], mean_frac[-1], xi_baseline)

    return TrialReport(
        strategy_id=strategy_id,
        n_trials=len(runs),
        episodes=episodes,
        mean_accuracy=mean_acc,
        std_accuracy=std_acc,
        mean_acquired=mean_acq,
        std_acquired=std_acq,
        mean_accumulated=mean_accum,
        mean_used_fraction=mean_frac,
        final_efficiency=final_eff,
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_HEADER = "strategy,trial,episode,acquired,accumulated,used_fraction,final_accuracy,xi,relative_xi"


@dataclass(frozen=True)
class ResultRow:
    strategy: int
    trial: int
    episode: int
    acquired: int
    accumulated: int
    used_fraction: float
    final_accuracy: float
    xi: float
    relative_xi: float | None


def rows_from_records(
    strategy_id: int,
    trial: int,
    records: Sequence[EpisodeRecord],
    xi_baseline: float | None = None,
) -> list[ResultRow]:
    rows = []
    for rec in records:
        xi = efficiency(rec.final_test_accuracy, rec.used_fraction)
        rows.append(ResultRow(
            strategy=strategy_id,
            trial=trial,
            episode=rec.episode,
            acquired=rec.acquired_count,
            accumulated=rec.accumulated_count,
            used_fraction=rec.used_fraction,
            final_accuracy=rec.final_test_accuracy,
            xi=xi,
            relative_xi=None if xi_baseline is None else xi / xi_baseline,
        ))
    return rows


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def emit_csv(rows: Sequence[ResultRow], path) -> None:
    """Write result rows as UTF-8 CSV; rejects an empty report before
    touching the filesystem."""
    if not rows:
        raise ValueError("refusing to emit an empty report")
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.strategy},{r.trial},{r.episode},{r.acquired},{r.accumulated},"
            f"{_fmt(r.used_fraction)},{_fmt(r.final_accuracy)},{_fmt(r.xi)},{_fmt(r.relative_xi)}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def parse_csv(path) -> list[ResultRow]:
    with open(path, "r", encoding="utf-8", newline="\n") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected CSV header")
    rows = []
    for line in lines[1:]:
        s, tr, ep, acq, accum, frac, acc, xi, rel = line.split(",")
        rows.append(ResultRow(
            int(s), int(tr), int(ep), int(acq), int(accum),
            float(frac), float(acc), float(xi), None if rel == "" else float(rel),
        ))
    return rows


# ---------------------------------------------------------------------------
# SVG charts
# ---------------------------------------------------------------------------

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]

CHART_KINDS = ("accuracy_vs_episode", "accuracy_vs_acquired", "acquisitions_vs_episode", "theta_sweep")


def _series_for_kind(report: TrialReport, kind: str):
    if kind == "accuracy_vs_episode":
        return list(report.episodes), list(report.mean_accuracy)
    if kind == "accuracy_vs_acquired":
        return list(report.mean_accumulated), list(report.mean_accuracy)
    if kind in ("acquisitions_vs_episode", "theta_sweep"):
        return list(report.episodes), list(report.mean_acquired)
    raise ValueError(f"unknown chart kind {kind!r}; expected one of {CHART_KINDS}")


_AXIS_LABELS = {
    "accuracy_vs_episode": ("episode", "test accuracy"),
    "accuracy_vs_acquired": ("images acquired", "test accuracy"),
    "acquisitions_vs_episode": ("episode", "images acquired"),
    "theta_sweep": ("episode", "images acquired"),
}


def emit_svg_chart(
    reports: Sequence[TrialReport],
    kind: str,
    path,
    labels: Sequence[str] | None = None,
) -> None:
    """Render one line chart: one polyline series per report."""
    if not reports:
        raise ValueError("refusing to emit a chart of an empty report list")
    if kind not in CHART_KINDS:
        raise ValueError(f"unknown chart kind {kind!r}; expected one of {CHART_KINDS}")
    if labels is None:
        labels = [f"strategy {r.strategy_id}" for r in reports]
    if len(labels) != len(reports):
        raise ValueError("one label per report required")

    series = [_series_for_kind(r, kind) for r in reports]
    x_label, y_label = _AXIS_LABELS[kind]

    width, height = 640, 420
    left, right, top, bottom = 62, 170, 24, 48
    px0, px1 = left, width - right
    py0, py1 = height - bottom, top

    xs_all = [x for xs, _ in series for x in xs]
    ys_all = [y for _, ys in series for y in ys]
    x_min, x_max = min(xs_all), max(xs_all)
    y_min, y_max = 0.0, max(ys_all) * 1.1 if max(ys_all) > 0 else 1.0
    if x_max == x_min:
        x_max = x_min + 1.0

    def sx(x):
        return px0 + (x - x_min) / (x_max - x_min) * (px1 - px0)

    def sy(y):
        return py0 - (y - y_min) / (y_max - y_min) * (py0 - py1)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
    ]
    # gridlines and y ticks
    for i in range(5):
        yv = y_min + (y_max - y_min) * i / 4
        y = sy(yv)
        out.append(f'<line x1="{px0}" y1="{y:.1f}" x2="{px1}" y2="{y:.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{px0 - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{yv:.3g}</text>')
    # x ticks
    for i in range(5):
        xv = x_min + (x_max - x_min) * i / 4
        x = sx(xv)
        out.append(f'<line x1="{x:.1f}" y1="{py0}" x2="{x:.1f}" y2="{py0 + 5}" stroke="#000000"/>')
        out.append(f'<text x="{x:.1f}" y="{py0 + 18}" text-anchor="middle" font-size="11" '
                   f'font-family="sans-serif">{xv:.3g}</text>')
    # axes
    out.append(f'<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" stroke="#000000" stroke-width="1.5"/>')
    out.append(f'<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" stroke="#000000" stroke-width="1.5"/>')
    out.append(f'<text x="{(px0 + px1) / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-size="12" font-family="sans-serif">{x_label}</text>')
    out.append(f'<text x="16" y="{(py0 + py1) / 2:.1f}" text-anchor="middle" font-size="12" '
               f'font-family="sans-serif" transform="rotate(-90 16 {(py0 + py1) / 2:.1f})">{y_label}</text>')
    # series + legend
    for idx, ((xs, ys), label) in enumerate(zip(series, labels)):
        color = _COLORS[idx % len(_COLORS)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>')
        ly = py1 + 14 + idx * 18
        out.append(f'<line x1="{px1 + 12}" y1="{ly}" x2="{px1 + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{px1 + 38}" y="{ly + 4}" font-size="11" font-family="sans-serif">{label}</text>')
    out.append("</svg>")

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(out) + "\n")
