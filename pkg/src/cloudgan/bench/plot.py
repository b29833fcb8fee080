"""Minimal deterministic SVG line plots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

LOG_FLOOR = 1e-7
COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 80, 150, 40, 60


@dataclass
class Series:
    name: str
    x: list
    y: list


@dataclass
class PlotStyle:
    title: str = ""
    xlabel: str = "x"
    ylabel: str = "y"
    log_y: bool = False
    extra: list = field(default_factory=list)   # free-text annotations


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.3g}"


def render_svg(series, style: PlotStyle) -> str:
    series = list(series)
    if not series:
        raise ValueError("emit_plot needs at least one series")
    for s in series:
        if len(s.x) != len(s.y) or len(s.x) == 0:
            raise ValueError(f"series {s.name!r} needs equal, non-zero x and y lengths")
    floored = False
    ys_all = []
    prepared = []
    for s in series:
        ys = [float(v) for v in s.y]
        if style.log_y:
            if any(v <= LOG_FLOOR for v in ys):
                floored = True
            ys = [math.log10(max(v, LOG_FLOOR)) for v in ys]
        prepared.append(([float(v) for v in s.x], ys))
        ys_all += ys
    xs_all = [v for xs, _ in prepared for v in xs]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-size="15">{escape(style.title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        ylab = _tick(10 ** yv) if style.log_y else _tick(yv)
        out.append(f'<text x="{_fmt(px(xv))}" y="{TOP + ph + 18}" text-anchor="middle" font-size="11">{_tick(xv)}</text>')
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(py(yv) + 4)}" text-anchor="end" font-size="11">{ylab}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{H - 15}" text-anchor="middle" font-size="13">'
               f'{escape(style.xlabel)}</text>')
    ytitle = style.ylabel + (" (log scale)" if style.log_y else "")
    out.append(f'<text x="18" y="{TOP + ph / 2:.0f}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.0f})">{escape(ytitle)}</text>')
    for i, (s, (xs, ys)) in enumerate(zip(series, prepared)):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = TOP + 16 * i + 10
        out.append(f'<text x="{W - RIGHT + 10}" y="{ly}" font-size="11" fill="{color}">{escape(s.name)}</text>')
    notes = list(style.extra)
    if floored:
        notes.append(f"values <= {LOG_FLOOR:g} floored at {LOG_FLOOR:g}")
    for i, note in enumerate(notes):
        out.append(f'<text x="{LEFT}" y="{H - 2 - 12 * (len(notes) - 1 - i)}" font-size="10">{escape(note)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series, style: PlotStyle, path) -> Path:
    path = Path(path)
    text = render_svg(series, style)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path
