"""SVG figures from summary tables.

``line``: one polyline per cell (movement rule / regime / mode combination)
over the sweep values, with a legend. ``grouped-bar``: one panel per sweep
value, one bar per (cell, metric). Output is plain text with fixed number
formatting so identical inputs give identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .experiments.stats import SummaryRow, SummaryTable

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")
CELL_KEYS = ("movement_rule", "regime", "mode")


class FigureError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    metrics: tuple[str, ...]
    title: str = ""

    def __post_init__(self):
        if self.kind not in ("line", "grouped-bar"):
            raise FigureError(f"figure kind {self.kind!r} not in ('line', 'grouped-bar')")
        if not self.metrics:
            raise FigureError("at least one metric is required")
        if self.kind == "line" and len(self.metrics) != 1:
            raise FigureError("line figures plot exactly one metric")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _cell_label(row: SummaryRow) -> str:
    keys = dict(row.keys)
    return " ".join(keys[k] for k in CELL_KEYS if keys.get(k))


def _sweep(row: SummaryRow) -> str:
    return dict(row.keys).get("sweep_value", "")


def _sweep_sort_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def _rows_for(table: SummaryTable, metrics: Sequence[str]) -> list[SummaryRow]:
    available = table.metrics()
    missing = [m for m in metrics if m not in available]
    if missing:
        raise FigureError(f"metric(s) {missing} not in summary; available: {available}")
    rows = [r for r in table.rows if r.metric in metrics]
    if not rows:
        raise FigureError("summary has no groups to plot")
    return rows


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for step in (1, 2, 2.5, 5, 10):
        if step * mag >= v:
            return step * mag
    return 10 * mag


def _axis(parts, x0, y0, w, h, ymin, ymax, xlabel, ylabel):
    parts.append(f'<line x1="{_f(x0)}" y1="{_f(y0 + h)}" x2="{_f(x0 + w)}" y2="{_f(y0 + h)}" stroke="black"/>')
    parts.append(f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x0)}" y2="{_f(y0 + h)}" stroke="black"/>')
    for i in range(5):
        v = ymin + (ymax - ymin) * i / 4
        y = y0 + h - h * i / 4
        parts.append(f'<text x="{_f(x0 - 6)}" y="{_f(y + 4)}" font-size="10" text-anchor="end">{v:.4g}</text>')
    parts.append(f'<text x="{_f(x0 + w / 2)}" y="{_f(y0 + h + 34)}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="{_f(x0 - 48)}" y="{_f(y0 + h / 2)}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 {_f(x0 - 48)} {_f(y0 + h / 2)})">{escape(ylabel)}</text>')


def line_svg(table: SummaryTable, metric: str, title: str = "") -> str:
    rows = _rows_for(table, [metric])
    cells = list(dict.fromkeys(_cell_label(r) for r in rows))
    xs = sorted({_sweep(r) for r in rows}, key=_sweep_sort_key)
    sweep_name = dict(rows[0].keys).get("sweep_name", "sweep")
    lo = min(0.0, min(r.mean for r in rows))
    hi = _nice_max(max(r.mean for r in rows))
    x0, y0, w, h = 80.0, 40.0, 460.0, 300.0
    parts = [f'<rect x="0" y="0" width="760" height="420" fill="white"/>']
    if title:
        parts.append(f'<text x="380" y="22" font-size="14" text-anchor="middle">{escape(title)}</text>')
    _axis(parts, x0, y0, w, h, lo, hi, sweep_name, metric)

    def px(i):
        return x0 + (w * i / (len(xs) - 1) if len(xs) > 1 else w / 2)

    def py(v):
        return y0 + h - h * (v - lo) / (hi - lo)

    for i, x in enumerate(xs):
        parts.append(f'<text x="{_f(px(i))}" y="{_f(y0 + h + 16)}" font-size="10" text-anchor="middle">{escape(x)}</text>')
    for ci, cell in enumerate(cells):
        colour = PALETTE[ci % len(PALETTE)]
        by_x = {_sweep(r): r.mean for r in rows if _cell_label(r) == cell}
        pts = " ".join(f"{_f(px(i))},{_f(py(by_x[x]))}" for i, x in enumerate(xs) if x in by_x)
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{pts}"/>')
        ly = y0 + 14 + 18 * ci
        parts.append(f'<line x1="560" y1="{_f(ly)}" x2="584" y2="{_f(ly)}" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="590" y="{_f(ly + 4)}" font-size="11">{escape(cell)}</text>')
    return _wrap(parts, 760, 420)


def grouped_bar_svg(table: SummaryTable, metrics: Sequence[str], title: str = "") -> str:
    rows = _rows_for(table, metrics)
    cells = list(dict.fromkeys(_cell_label(r) for r in rows))
    xs = sorted({_sweep(r) for r in rows}, key=_sweep_sort_key)
    sweep_name = dict(rows[0].keys).get("sweep_name", "sweep")
    hi = _nice_max(max(r.mean for r in rows))
    lo = min(0.0, min(r.mean for r in rows))
    panel_w, gap, h, x0, y0 = 180.0, 30.0, 260.0, 80.0, 50.0
    series = [(c, m) for c in cells for m in metrics]
    width = int(x0 + len(xs) * (panel_w + gap) + 40)
    height = int(y0 + h + 60 + 16 * len(series))
    parts = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if title:
        parts.append(f'<text x="{width / 2:.2f}" y="22" font-size="14" text-anchor="middle">{escape(title)}</text>')
    _axis(parts, x0, y0, len(xs) * (panel_w + gap), h, lo, hi, sweep_name, " / ".join(metrics))
    bar_w = panel_w / max(1, len(series))
    index = {(_sweep(r), _cell_label(r), r.metric): r.mean for r in rows}

    def py(v):
        return y0 + h - h * (v - lo) / (hi - lo)

    for pi, x in enumerate(xs):
        px0 = x0 + gap / 2 + pi * (panel_w + gap)
        parts.append(f'<g class="panel" data-sweep="{escape(x)}">')
        for si, (cell, metric) in enumerate(series):
            if (x, cell, metric) not in index:
                continue
            v = index[(x, cell, metric)]
            top, base = py(max(v, 0.0)), py(min(v, 0.0))
            colour = PALETTE[(cells.index(cell) * len(metrics) + metrics.index(metric)) % len(PALETTE)]
            parts.append(f'<rect class="bar" x="{_f(px0 + si * bar_w)}" y="{_f(top)}" '
                         f'width="{_f(bar_w * 0.9)}" height="{_f(base - top)}" fill="{colour}">'
                         f'<title>{escape(cell)} {escape(metric)}: {v:.6g}</title></rect>')
        parts.append("</g>")
        parts.append(f'<text x="{_f(px0 + panel_w / 2)}" y="{_f(y0 + h + 16)}" font-size="11" '
                     f'text-anchor="middle">{escape(sweep_name)} {escape(x)}</text>')
    for si, (cell, metric) in enumerate(series):
        colour = PALETTE[(cells.index(cell) * len(metrics) + metrics.index(metric)) % len(PALETTE)]
        ly = y0 + h + 48 + 16 * si
        parts.append(f'<rect x="{_f(x0)}" y="{_f(ly - 9)}" width="12" height="10" fill="{colour}"/>')
        parts.append(f'<text x="{_f(x0 + 18)}" y="{_f(ly)}" font-size="11">{escape(cell)} {escape(metric)}</text>')
    return _wrap(parts, width, height)


def _wrap(parts, width, height) -> str:
    head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n')
    return head + "\n".join(parts) + "\n</svg>\n"


def render(table: SummaryTable, spec: FigureSpec) -> str:
    if spec.kind == "line":
        return line_svg(table, spec.metrics[0], spec.title)
    return grouped_bar_svg(table, spec.metrics, spec.title)


def write_figure(table: SummaryTable, spec: FigureSpec, path: str | Path) -> None:
    svg = render(table, spec)  # raises before anything is written
    Path(path).write_text(svg, encoding="utf-8", newline="")
