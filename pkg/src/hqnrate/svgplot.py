"""Static SVG charts: scatter panels and line charts.

Output is plain markup (rect, circle, polyline, text) with fixed number
formatting, so identical inputs give identical bytes. An optional
timestamp comment is the only run-dependent content.
"""
from __future__ import annotations

import datetime as _dt
import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _f(v) -> str:
    return format(float(v), ".2f")


def _header(width, height, timestamp):
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
    ]
    if timestamp:
        stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        out.append(f"<!-- generated {stamp} -->")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    return out


def _text(x, y, s, anchor="middle", extra=""):
    return f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{extra}>{escape(str(s))}</text>'


def nice_ticks(lo, hi, n=5):
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0]
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _range(vals, pad=0.05):
    vals = np.asarray(vals, dtype=np.float64)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


class _Frame:
    def __init__(self, x0, y0, w, h, xr, yr):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xr, self.yr = xr, yr

    def px(self, x):
        return self.x0 + (x - self.xr[0]) / (self.xr[1] - self.xr[0]) * self.w

    def py(self, y):
        return self.y0 + self.h - (y - self.yr[0]) / (self.yr[1] - self.yr[0]) * self.h

    def axes(self, xlabel, ylabel, title=None):
        out = [f'<rect x="{_f(self.x0)}" y="{_f(self.y0)}" width="{_f(self.w)}" height="{_f(self.h)}" '
               'fill="none" stroke="#444"/>']
        for t in nice_ticks(*self.xr):
            x = self.px(t)
            out.append(f'<line x1="{_f(x)}" y1="{_f(self.y0 + self.h)}" x2="{_f(x)}" '
                       f'y2="{_f(self.y0 + self.h + 4)}" stroke="#444"/>')
            out.append(_text(x, self.y0 + self.h + 15, format(t, "g")))
        for t in nice_ticks(*self.yr):
            y = self.py(t)
            out.append(f'<line x1="{_f(self.x0 - 4)}" y1="{_f(y)}" x2="{_f(self.x0)}" y2="{_f(y)}" stroke="#444"/>')
            out.append(_text(self.x0 - 6, y + 4, format(t, "g"), anchor="end"))
        out.append(_text(self.x0 + self.w / 2, self.y0 + self.h + 30, xlabel))
        cx, cy = self.x0 - 38, self.y0 + self.h / 2
        out.append(_text(cx, cy, ylabel, extra=f' transform="rotate(-90 {_f(cx)} {_f(cy)})"'))
        if title:
            out.append(_text(self.x0 + self.w / 2, self.y0 - 8, title, extra=' font-weight="bold"'))
        return out


def scatter_panels(X, label_rows, row_titles=None, title=None, timestamp=True, max_points=3000) -> str:
    """One row of coordinate-pair projections per labelling in ``label_rows``.

    ``X`` is (N, D); for D >= 2 the panels are every pair (i, j), i < j.
    Points are colored by label; at most ``max_points`` evenly spaced
    samples are drawn.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)] or [(0, None)]
    keep = np.arange(n) if n <= max_points else np.linspace(0, n - 1, max_points).astype(int)
    pw, ph, ml, mt = 240, 220, 60, 40
    width = ml + len(pairs) * (pw + ml)
    height = mt + len(label_rows) * (ph + mt + 30) + 20
    out = _header(width, height, timestamp)
    if title:
        out.append(_text(width / 2, 18, title, extra=' font-size="14" font-weight="bold"'))
    for row, labels in enumerate(label_rows):
        labels = np.asarray(labels).astype(int)
        y0 = mt + 10 + row * (ph + mt + 30)
        for col, (i, j) in enumerate(pairs):
            xs = X[keep, i]
            ys = X[keep, j] if j is not None else np.zeros(keep.size)
            fr = _Frame(ml + col * (pw + ml), y0, pw, ph, _range(xs), _range(ys))
            sub = f"x{i} vs x{j}" if j is not None else f"x{i}"
            if row_titles:
                sub = f"{row_titles[row]}: {sub}"
            out.extend(fr.axes(f"x{i}", f"x{j}" if j is not None else "", sub))
            for x, y, lab in zip(xs, ys, labels[keep]):
                out.append(f'<circle cx="{_f(fr.px(x))}" cy="{_f(fr.py(y))}" r="1.6" '
                           f'fill="{PALETTE[lab % len(PALETTE)]}" fill-opacity="0.7"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(x, series: dict, xlabel, ylabel, title=None, timestamp=True) -> str:
    """One polyline per entry of ``series`` (name -> y values), with legend.
    Non-finite y values break the line."""
    x = np.asarray(x, dtype=np.float64)
    allys = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()]) if series else x
    width, height = 640, 420
    fr = _Frame(70, 40, 420, 320, _range(x, 0.02), _range(allys))
    out = _header(width, height, timestamp)
    out.extend(fr.axes(xlabel, ylabel, title))
    for k, (name, ys) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        ys = np.asarray(ys, dtype=np.float64)
        segment = []
        for xi, yi in list(zip(x, ys)) + [(np.nan, np.nan)]:
            if np.isfinite(yi):
                segment.append(f"{_f(fr.px(xi))},{_f(fr.py(yi))}")
                continue
            if segment:
                out.append(f'<polyline points="{" ".join(segment)}" fill="none" stroke="{color}" stroke-width="2"/>')
            segment = []
        for xi, yi in zip(x, ys):
            if np.isfinite(yi):
                out.append(f'<circle cx="{_f(fr.px(xi))}" cy="{_f(fr.py(yi))}" r="2.5" fill="{color}"/>')
        ly = 50 + 18 * k
        out.append(f'<line x1="505" y1="{ly}" x2="525" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(_text(530, ly + 4, name, anchor="start"))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, markup: str):
    with open(path, "w", newline="\n") as fh:
        fh.write(markup)
