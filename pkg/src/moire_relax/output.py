"""CSV and SVG writers. Output is byte-deterministic for identical inputs."""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from html import escape
from pathlib import Path
from typing import Sequence

WIDTH, HEIGHT = 800, 500
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 170, 40, 60
_UMASK = os.umask(0)
os.umask(_UMASK)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


class OutputError(OSError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = Path(path)


def _atomic_write(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        # mkstemp creates 0600 files; give the result the usual umask permissions
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    return path


def format_number(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    return repr(float(value))


def emit_csv(records: Sequence[dict], path, columns: Sequence[str] | None = None) -> Path:
    """Write dict records as CSV with a header row; column order from ``columns``
    or from the first record."""
    records = list(records)
    if not records:
        raise OutputError(path, "no records to write")
    columns = list(columns or records[0].keys())
    lines = [",".join(columns)]
    for rec in records:
        lines.append(",".join(format_number(rec[c]) for c in columns))
    return _atomic_write(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]


def _nice_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        pad = abs(lo) * 0.1 or 1.0
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9)
    last = math.floor(hi / step + 1e-9)
    return [k * step for k in range(first, last + 1)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    if v == 0:
        return "0"
    return f"{v:.4g}"


def emit_svg(series: Sequence[Series], path, title: str = "", xlabel: str = "",
             ylabel: str = "", logx: bool = False, logy: bool = False) -> Path:
    """Line chart with one polyline per series, ticked axes and a legend."""
    series = [s for s in series]
    if not series or not any(len(s.x) for s in series):
        raise OutputError(path, "no data to plot")

    def tx(v):
        return math.log10(v) if logx else float(v)

    def ty(v):
        return math.log10(v) if logy else float(v)

    xs = [tx(v) for s in series for v in s.x]
    ys = [ty(v) for s in series for v in s.y]
    x_ticks = _nice_ticks(min(xs), max(xs))
    y_ticks = _nice_ticks(min(ys), max(ys))
    x0, x1 = min(x_ticks[0], min(xs)), max(x_ticks[-1], max(xs))
    y0, y1 = min(y_ticks[0], min(ys)), max(y_ticks[-1], max(ys))
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(v):
        return MARGIN_LEFT + (v - x0) / (x1 - x0) * plot_w

    def py(v):
        return MARGIN_TOP + (y1 - v) / (y1 - y0) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="24" text-anchor="middle" '
                   f'font-size="15">{escape(title)}</text>')
    out.append(f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" '
               f'fill="none" stroke="black"/>')
    bottom = MARGIN_TOP + plot_h
    for t in x_ticks:
        if x0 <= t <= x1:
            x = _fmt(px(t))
            out.append(f'<line x1="{x}" y1="{bottom}" x2="{x}" y2="{bottom + 5}" stroke="black"/>')
            out.append(f'<text x="{x}" y="{bottom + 18}" text-anchor="middle">'
                       f'{_tick_label(t, logx)}</text>')
    for t in y_ticks:
        if y0 <= t <= y1:
            y = _fmt(py(t))
            out.append(f'<line x1="{MARGIN_LEFT - 5}" y1="{y}" x2="{MARGIN_LEFT}" y2="{y}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{MARGIN_LEFT - 8}" y="{y}" text-anchor="end" '
                       f'dominant-baseline="middle">{_tick_label(t, logy)}</text>')
    if xlabel:
        out.append(f'<text x="{MARGIN_LEFT + plot_w / 2:.2f}" y="{HEIGHT - 15}" '
                   f'text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        cy = MARGIN_TOP + plot_h / 2
        out.append(f'<text x="20" y="{cy:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 20 {cy:.2f})">{escape(ylabel)}</text>')
    for k, s in enumerate(series):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{_fmt(px(tx(a)))},{_fmt(py(ty(b)))}" for a, b in zip(s.x, s.y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN_TOP + 15 + 20 * k
        lx = WIDTH - MARGIN_RIGHT + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{lx + 32}" y="{ly}" dominant-baseline="middle">'
                   f'{escape(s.label)}</text>')
    out.append("</svg>")
    return _atomic_write(path, "\n".join(out) + "\n")
