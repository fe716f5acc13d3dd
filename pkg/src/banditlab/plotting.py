"""Static SVG figures written by hand: mean lines with +/-2 std bands, grouped bars.

Coordinates are printed with fixed precision and no timestamps or random ids,
so identical inputs give byte-identical files.  The plot-area group carries
its data-to-pixel mapping as ``data-*`` attributes for read-back.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .simulator import Aggregate, aggregate_replications

WIDTH, HEIGHT = 760, 460
LEFT, RIGHT, TOP, BOTTOM = 80, 170, 40, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")
DASHES = ("", "6,3", "2,2", "8,3,2,3", "1,3", "10,4")
MAX_POINTS = 400


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    x = start
    while x <= hi + 1e-9 * step:
        ticks.append(round(x, 10))
        x += step
    return ticks


def _tick_label(v: float) -> str:
    if v != 0 and (abs(v) >= 1e5 or abs(v) < 1e-2):
        return f"{v:.1e}"
    return f"{v:g}"


class _Frame:
    def __init__(self, x0, x1, y0, y1):
        self.x0, self.x1 = float(x0), float(x1) if x1 > x0 else float(x0) + 1.0
        pad = 0.04 * (y1 - y0) if y1 > y0 else 1.0
        self.y0, self.y1 = float(y0) - pad, float(y1) + pad
        self.w = WIDTH - LEFT - RIGHT
        self.h = HEIGHT - TOP - BOTTOM

    def px(self, x):
        return LEFT + (np.asarray(x, dtype=float) - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, y):
        return TOP + self.h - (np.asarray(y, dtype=float) - self.y0) / (self.y1 - self.y0) * self.h

    def attrs(self) -> str:
        return (f'data-x0="{self.x0!r}" data-x1="{self.x1!r}" data-y0="{self.y0!r}" data-y1="{self.y1!r}" '
                f'data-left="{LEFT}" data-top="{TOP}" data-width="{self.w}" data-height="{self.h}"')


def _pts(xs, ys) -> str:
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))


def _axes(frame: _Frame, xlabel: str, ylabel: str, title: str, xticks=None) -> list[str]:
    out = [f'<rect x="{LEFT}" y="{TOP}" width="{frame.w}" height="{frame.h}" fill="none" stroke="#333"/>']
    for v in _nice_ticks(frame.y0, frame.y1):
        y = float(frame.py(v))
        out.append(f'<line x1="{LEFT - 4}" y1="{y:.3f}" x2="{LEFT + frame.w}" y2="{y:.3f}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.3f}" text-anchor="end" font-size="11">{_tick_label(v)}</text>')
    if xticks is None:
        xticks = [(float(frame.px(v)), _tick_label(v)) for v in _nice_ticks(frame.x0, frame.x1)]
    for x, label in xticks:
        out.append(f'<line x1="{x:.3f}" y1="{TOP + frame.h}" x2="{x:.3f}" y2="{TOP + frame.h + 4}" stroke="#333"/>')
        out.append(f'<text x="{x:.3f}" y="{TOP + frame.h + 18}" text-anchor="middle" font-size="11">{escape(label)}</text>')
    out.append(f'<text x="{LEFT + frame.w / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{TOP + frame.h / 2}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 18 {TOP + frame.h / 2})">{escape(ylabel)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>')
    return out


def _legend(names, kind="line") -> list[str]:
    out = []
    x = WIDTH - RIGHT + 15
    for k, name in enumerate(names):
        y = TOP + 10 + 20 * k
        color = COLORS[k % len(COLORS)]
        if kind == "line":
            dash = DASHES[k % len(DASHES)]
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<line x1="{x}" y1="{y}" x2="{x + 28}" y2="{y}" stroke="{color}" stroke-width="2"{dash_attr}/>')
        else:
            out.append(f'<rect x="{x}" y="{y - 6}" width="28" height="12" fill="{color}"/>')
        out.append(f'<text x="{x + 34}" y="{y + 4}" font-size="12" class="legend-entry">{escape(name)}</text>')
    return out


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>', *body, "</svg>"]) + "\n"


def thin_indices(n: int, max_points: int = MAX_POINTS) -> np.ndarray:
    if n <= max_points:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_points).round().astype(int))


def plot_series(series: dict, out_path, *, title: str, ylabel: str, xlabel: str = "round") -> Path:
    """One line per entry of ``series`` (label -> (rounds, Aggregate)) with a 2-std band."""
    if not series:
        raise ValueError("no series to plot")
    thinned = {}
    for label, (rounds, agg) in series.items():
        k = thin_indices(len(rounds))
        thinned[label] = (np.asarray(rounds)[k], agg.mean[k], agg.lower[k], agg.upper[k], agg.std[k])
    xs = np.concatenate([v[0] for v in thinned.values()])
    lo = min(float(v[2].min()) for v in thinned.values())
    hi = max(float(v[3].max()) for v in thinned.values())
    frame = _Frame(xs.min(), xs.max(), lo, hi)
    body = _axes(frame, xlabel, ylabel, title)
    body.append(f'<g id="plot-area" {frame.attrs()}>')
    for k, (label, (x, mean, lower, upper, _)) in enumerate(thinned.items()):
        color = COLORS[k % len(COLORS)]
        px = frame.px(x)
        band = _pts(np.concatenate([px, px[::-1]]), np.concatenate([frame.py(upper), frame.py(lower)[::-1]]))
        body.append(f'<polygon class="band" data-policy="{escape(label)}" data-n="{len(x)}" points="{band}" '
                    f'fill="{color}" fill-opacity="0.18" stroke="none"/>')
    for k, (label, (x, mean, *_)) in enumerate(thinned.items()):
        color = COLORS[k % len(COLORS)]
        dash = DASHES[k % len(DASHES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        body.append(f'<polyline class="mean" data-policy="{escape(label)}" points="{_pts(frame.px(x), frame.py(mean))}" '
                    f'fill="none" stroke="{color}" stroke-width="1.8"{dash_attr}/>')
    body.append("</g>")
    body += _legend(list(thinned))
    out_path = Path(out_path)
    out_path.write_text(_document(body))
    return out_path


def plot_bars(groups: list[str], series: dict, out_path, *, title: str, ylabel: str, xlabel: str) -> Path:
    """Grouped bars: ``series`` maps label -> (means, stds) aligned with ``groups``; whiskers are +/-2 std."""
    if not series or not groups:
        raise ValueError("no bars to plot")
    means = np.array([np.asarray(m, dtype=float) for m, _ in series.values()])
    stds = np.array([np.asarray(s, dtype=float) for _, s in series.values()])
    frame = _Frame(0, len(groups), min(0.0, float((means - 2 * stds).min())), float((means + 2 * stds).max()))
    slot = frame.w / len(groups)
    bar_w = 0.8 * slot / len(series)
    xticks = [(LEFT + (g + 0.5) * slot, str(name)) for g, name in enumerate(groups)]
    body = _axes(frame, xlabel, ylabel, title, xticks=xticks)
    body.append(f'<g id="plot-area" {frame.attrs()}>')
    base = float(frame.py(max(frame.y0, 0.0)))
    for k, label in enumerate(series):
        color = COLORS[k % len(COLORS)]
        for g in range(len(groups)):
            x = LEFT + g * slot + 0.1 * slot + k * bar_w
            top = float(frame.py(means[k, g]))
            body.append(f'<rect class="bar" data-policy="{escape(label)}" x="{x:.3f}" y="{min(top, base):.3f}" '
                        f'width="{bar_w:.3f}" height="{abs(base - top):.3f}" fill="{color}"/>')
            cx = x + bar_w / 2
            y_lo, y_hi = frame.py(means[k, g] - 2 * stds[k, g]), frame.py(means[k, g] + 2 * stds[k, g])
            body.append(f'<line x1="{cx:.3f}" y1="{y_lo:.3f}" x2="{cx:.3f}" y2="{y_hi:.3f}" stroke="#222"/>')
    body.append("</g>")
    body += _legend(list(series), kind="bar")
    out_path = Path(out_path)
    out_path.write_text(_document(body))
    return out_path


def read_trace_csvs(paths, metric: str) -> dict:
    """policy -> (rounds, list of per-replication metric arrays)."""
    data: dict = defaultdict(lambda: defaultdict(list))
    rounds: dict = defaultdict(lambda: defaultdict(list))
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if metric not in (reader.fieldnames or []):
                raise ValueError(f"metric {metric!r} not a trace column")
            for row in reader:
                key = (str(path), int(row["replication"]))
                data[row["policy"]][key].append(float(row[metric]))
                rounds[row["policy"]][key].append(int(row["round"]))
    out = {}
    for policy, reps in data.items():
        keys = sorted(reps)
        out[policy] = (np.array(rounds[policy][keys[0]]), [np.array(reps[k]) for k in keys])
    return out


def emit_plot(trace_csvs, metric: str, out_path, title: str | None = None) -> Path:
    paths = [trace_csvs] if isinstance(trace_csvs, (str, Path)) else list(trace_csvs)
    if not paths:
        raise ValueError("no trace files given")
    raw = read_trace_csvs(paths, metric)
    if not raw:
        raise ValueError("trace files contain no rows")
    series = {}
    for policy, (rounds, reps) in raw.items():
        if len(reps) >= 2:
            agg = aggregate_replications(reps)
        else:
            agg = Aggregate(reps[0], np.zeros_like(reps[0]))
        series[policy] = (rounds, agg)
    return plot_series(series, out_path, title=title or metric.replace("_", " "), ylabel=metric.replace("_", " "))
