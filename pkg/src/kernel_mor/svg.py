"""Minimal static SVG line and marker plots."""
from __future__ import annotations

import math

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=30, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step) + 1)]


def _fmt(v):
    return f"{v:.6g}"


class _Axes:
    def __init__(self, x_range, y_range, log_y=False):
        self.log_y = log_y
        self.x0, self.x1 = x_range
        y0, y1 = y_range
        if log_y:
            y0, y1 = math.floor(math.log10(y0)), math.ceil(math.log10(y1))
        elif y1 == y0:
            y0, y1 = y0 - 1.0, y1 + 1.0
        self.y0, self.y1 = y0, y1
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(self, x):
        span = (self.x1 - self.x0) or 1.0
        return MARGIN["left"] + (x - self.x0) / span * self.pw

    def py(self, y):
        if self.log_y:
            y = math.log10(y)
        return MARGIN["top"] + (1.0 - (y - self.y0) / (self.y1 - self.y0)) * self.ph

    def frame(self, title, xlabel, ylabel):
        out = [f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{self.pw}" height="{self.ph}" '
               'fill="none" stroke="#000"/>',
               f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
               f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
               f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {HEIGHT / 2})">{ylabel}</text>']
        for t in _ticks(self.x0, self.x1):
            x = self.px(t)
            out.append(f'<line x1="{x:.2f}" y1="{MARGIN["top"] + self.ph}" x2="{x:.2f}" '
                       f'y2="{MARGIN["top"] + self.ph + 5}" stroke="#000"/>')
            out.append(f'<text x="{x:.2f}" y="{MARGIN["top"] + self.ph + 18}" text-anchor="middle" '
                       f'font-size="11">{_fmt(t)}</text>')
        yt = range(int(self.y0), int(self.y1) + 1) if self.log_y else _ticks(self.y0, self.y1)
        for t in yt:
            y = MARGIN["top"] + (1.0 - (t - self.y0) / (self.y1 - self.y0)) * self.ph
            label = f"1e{t}" if self.log_y else _fmt(t)
            out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{y:.2f}" x2="{MARGIN["left"]}" y2="{y:.2f}" stroke="#000"/>')
            out.append(f'<text x="{MARGIN["left"] - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11">{label}</text>')
        return out


def _document(body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n<rect width="100%" height="100%" fill="#fff"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def hankel_spectrum(path, sigma, title="Hankel singular values"):
    """Markers at ``(k, sigma_k)`` on a log axis; zero values are omitted."""
    sigma = np.asarray(sigma, dtype=float)
    idx = np.nonzero(sigma > 0)[0]
    vals = sigma[idx]
    if vals.size == 0:
        vals, idx = np.array([1.0]), np.array([0])
    ax = _Axes((0.5, max(idx.max() + 1.5, 2.5)), (vals.min(), vals.max()), log_y=True)
    body = ax.frame(title, "index", "value")
    for k, v in zip(idx, vals):
        body.append(f'<circle cx="{ax.px(k + 1):.2f}" cy="{ax.py(v):.2f}" r="3.5" fill="{COLORS[0]}"/>')
    with open(path, "w") as fh:
        fh.write(_document(body))


def line_plot(path, t, series, title, xlabel="t [s]", ylabel=""):
    """``series`` is a list of ``(label, values)``."""
    t = np.asarray(t, dtype=float)
    allv = np.concatenate([np.asarray(v, dtype=float) for _, v in series])
    lo, hi = float(allv.min()), float(allv.max())
    pad = 0.05 * (hi - lo or 1.0)
    ax = _Axes((float(t[0]), float(t[-1])), (lo - pad, hi + pad))
    body = ax.frame(title, xlabel, ylabel)
    for i, (label, v) in enumerate(series):
        pts = " ".join(f"{ax.px(a):.2f},{ax.py(b):.2f}" for a, b in zip(t, v))
        color = COLORS[i % len(COLORS)]
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.3"/>')
        ly = MARGIN["top"] + 16 + 16 * i
        lx = WIDTH - MARGIN["right"] - 120
        body.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{lx + 26}" y="{ly}" font-size="11">{label}</text>')
    with open(path, "w") as fh:
        fh.write(_document(body))
