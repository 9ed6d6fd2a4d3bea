"""Minimal static SVG rendering: line plots and processor Gantt strips.

Hand-rolled on purpose — CSV files are the real output contract, the SVGs
are a convenience for eyeballing results, and a plotting dependency is not
worth it for polylines and rectangles. Output is deterministic for fixed
input (plain string formatting, no timestamps).
"""

from __future__ import annotations

import math

WIDTH, HEIGHT = 720, 480
MARGIN = {"left": 70, "right": 20, "top": 40, "bottom": 50}

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"]

PHASE_COLORS = {
    "init": "#c7c7c7",
    "weight": "#6baed6",
    "resample": "#9467bd",
    "move": "#74c476",
    "wait": "#4d4d4d",
}


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s for s in (1 * mag, 2 * mag, 5 * mag, 10 * mag) if s >= raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _tick_label(t: float) -> str:
    if t == 0:
        return "0"
    if abs(t) >= 1e4 or abs(t) < 1e-3:
        return f"{t:.0e}"
    return f"{t:g}"


class _Canvas:
    def __init__(self, x_range, y_range, logy=False):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.logy = logy

    def px(self, x):
        w = WIDTH - MARGIN["left"] - MARGIN["right"]
        return MARGIN["left"] + w * (x - self.x0) / (self.x1 - self.x0)

    def py(self, y):
        if self.logy:
            y, y0, y1 = math.log10(y), math.log10(self.y0), math.log10(self.y1)
        else:
            y0, y1 = self.y0, self.y1
        h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        return HEIGHT - MARGIN["bottom"] - h * (y - y0) / (y1 - y0)


def line_plot(path, series, title="", xlabel="", ylabel="", logy=False):
    """Write a polyline SVG. `series` is a list of (label, xs, ys)."""
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if not logy or y > 0]
    if not xs_all or not ys_all:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if logy:
        y0, y1 = 10 ** math.floor(math.log10(y0)), 10 ** math.ceil(math.log10(y1))
        if y1 == y0:
            y1 = y0 * 10
    elif y1 == y0:
        y1 = y0 + 1.0
    cv = _Canvas((x0, x1), (y0, y1), logy)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
           f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" '
                   f'font-size="16" font-family="sans-serif">{title}</text>')
    # axes + ticks
    ax_y = HEIGHT - MARGIN["bottom"]
    out.append(f'<line x1="{MARGIN["left"]}" y1="{ax_y}" '
               f'x2="{WIDTH - MARGIN["right"]}" y2="{ax_y}" stroke="black"/>')
    out.append(f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"]}" '
               f'x2="{MARGIN["left"]}" y2="{ax_y}" stroke="black"/>')
    for t in _nice_ticks(x0, x1):
        x = cv.px(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{ax_y}" x2="{_fmt(x)}" '
                   f'y2="{ax_y + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{ax_y + 20}" text-anchor="middle" '
                   f'font-size="11" font-family="sans-serif">{_tick_label(t)}</text>')
    if logy:
        d = math.ceil(math.log10(y0))
        yticks = [10.0 ** e for e in range(d, math.floor(math.log10(y1)) + 1)]
    else:
        yticks = _nice_ticks(y0, y1)
    for t in yticks:
        y = cv.py(t)
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{_fmt(y)}" '
                   f'x2="{MARGIN["left"]}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{_fmt(y + 4)}" '
                   f'text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{_tick_label(t)}</text>')
    if xlabel:
        out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" '
                   f'font-size="13" font-family="sans-serif">{xlabel}</text>')
    if ylabel:
        out.append(f'<text x="18" y="{HEIGHT / 2}" text-anchor="middle" '
                   f'font-size="13" font-family="sans-serif" '
                   f'transform="rotate(-90 18 {HEIGHT / 2})">{ylabel}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(cv.px(x))},{_fmt(cv.py(y))}"
                       for x, y in zip(xs, ys) if not logy or y > 0)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        ly = MARGIN["top"] + 14 * (i + 1)
        lx = WIDTH - MARGIN["right"] - 150
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}" font-size="11" '
                   f'font-family="sans-serif">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def gantt_plot(path, records, title=""):
    """One horizontal strip per processor, rectangles colored by phase."""
    if not records:
        raise ValueError("nothing to plot")
    procs = sorted({r.processor for r in records})
    t_end = max(r.end for r in records)
    if t_end <= 0:
        t_end = 1.0
    row_h = min(36, (HEIGHT - MARGIN["top"] - MARGIN["bottom"]) / len(procs))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
           f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" '
                   f'font-size="16" font-family="sans-serif">{title}</text>')
    span = WIDTH - MARGIN["left"] - MARGIN["right"]
    for i, p in enumerate(procs):
        y = MARGIN["top"] + i * row_h
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{_fmt(y + row_h / 2 + 4)}" '
                   f'text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">proc {p}</text>')
        for r in records:
            if r.processor != p or r.end <= r.start:
                continue
            x = MARGIN["left"] + span * r.start / t_end
            w = span * (r.end - r.start) / t_end
            c = PHASE_COLORS.get(r.phase, "#000000")
            out.append(f'<rect x="{_fmt(x)}" y="{_fmt(y + 2)}" '
                       f'width="{_fmt(max(w, 0.5))}" height="{_fmt(row_h - 4)}" '
                       f'fill="{c}"/>')
    ly = HEIGHT - MARGIN["bottom"] + 24
    lx = MARGIN["left"]
    for phase, c in PHASE_COLORS.items():
        out.append(f'<rect x="{_fmt(lx)}" y="{ly - 10}" width="12" height="12" '
                   f'fill="{c}"/>')
        out.append(f'<text x="{_fmt(lx + 16)}" y="{ly}" font-size="11" '
                   f'font-family="sans-serif">{phase}</text>')
        lx += 90
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
