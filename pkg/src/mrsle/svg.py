"""Minimal self-contained SVG plots."""

from __future__ import annotations

import math
from html import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H, PAD = 480, 360, 48


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _frame(title: str, body: list[str], stamp: str = "") -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">')
    t = f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>'
    note = f"<!-- {escape(stamp)} -->" if stamp else ""
    return "\n".join([head, note, '<rect width="100%" height="100%" fill="white"/>', t, *body, "</svg>"]) + "\n"


class _Axes:
    def __init__(self, xs, ys):
        xs = np.concatenate([np.ravel(x) for x in xs])
        ys = np.concatenate([np.ravel(y) for y in ys])
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        self.x0, self.x1 = float(xs.min()), float(xs.max())
        self.y0, self.y1 = float(ys.min()), float(ys.max())
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        return PAD + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * (W - 2 * PAD)

    def py(self, y):
        return H - PAD - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * (H - 2 * PAD)

    def decorations(self, xlabel: str, ylabel: str) -> list[str]:
        out = [f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
               'fill="none" stroke="#444"/>']
        for v in np.linspace(self.x0, self.x1, 5):
            out.append(f'<text x="{_fmt(self.px(v))}" y="{H - PAD + 16}" text-anchor="middle" '
                       f'font-size="10">{_fmt(v)}</text>')
        for v in np.linspace(self.y0, self.y1, 5):
            out.append(f'<text x="{PAD - 4}" y="{_fmt(self.py(v) + 3)}" text-anchor="end" '
                       f'font-size="10">{_fmt(v)}</text>')
        out.append(f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
        out.append(f'<text x="12" y="{H / 2}" text-anchor="middle" font-size="12" '
                   f'transform="rotate(-90 12 {H / 2})">{escape(ylabel)}</text>')
        return out


def _polyline(xs, ys, color, dash=False, width=1.5) -> str:
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys) if math.isfinite(a) and math.isfinite(b))
    d = ' stroke-dasharray="6 4"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{d}/>'


def line_plot(path, series, title="", xlabel="", ylabel="", markers=True, stamp="") -> None:
    """``series`` is a list of dicts with ``x``, ``y`` and optional ``label``,
    ``dash`` and ``err`` (error bar half-widths)."""
    ax = _Axes([s["x"] for s in series], [np.concatenate([np.ravel(s["y"]) - np.ravel(s.get("err", 0)),
                                                          np.ravel(s["y"]) + np.ravel(s.get("err", 0))])
                                          for s in series])
    body = ax.decorations(xlabel, ylabel)
    for i, s in enumerate(series):
        c = PALETTE[i % len(PALETTE)]
        x, y = np.ravel(s["x"]), np.ravel(s["y"])
        body.append(_polyline(ax.px(x), ax.py(y), c, s.get("dash", False)))
        if markers and s.get("markers", True):
            for a, b in zip(ax.px(x), ax.py(y)):
                body.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="2.5" fill="{c}"/>')
        if "err" in s:
            for a, b, e in zip(x, y, np.ravel(s["err"])):
                body.append(f'<line x1="{_fmt(ax.px(a))}" x2="{_fmt(ax.px(a))}" y1="{_fmt(ax.py(b - e))}" '
                            f'y2="{_fmt(ax.py(b + e))}" stroke="{c}"/>')
        if s.get("label"):
            body.append(f'<text x="{W - PAD - 4}" y="{PAD + 14 + 14 * i}" text-anchor="end" font-size="11" '
                        f'fill="{c}">{escape(s["label"])}</text>')
    with open(path, "w") as fh:
        fh.write(_frame(title, body, stamp))


def curve_plot(path, curves, title="", stamp="") -> None:
    """Curves (complex arrays) inside the unit circle, equal aspect."""
    s = (H - 2 * PAD) / 2.0
    cx, cy = W / 2.0, H / 2.0 + 8
    body = [f'<circle cx="{cx}" cy="{cy}" r="{s}" fill="none" stroke="#444"/>']
    for i, z in enumerate(curves):
        z = np.asarray(z, dtype=complex)
        body.append(_polyline(cx + s * z.real, cy - s * z.imag, PALETTE[i % len(PALETTE)], width=1.0))
    body.append(f'<circle cx="{cx}" cy="{cy}" r="1.5" fill="black"/>')
    with open(path, "w") as fh:
        fh.write(_frame(title, body, stamp))
