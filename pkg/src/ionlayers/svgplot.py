"""Minimal static SVG emitters: scatter, histogram, heatmap, line plots.

Self-contained documents, no display server.  Output is deterministic;
a generation timestamp is embedded unless suppressed (``timestamp=None``).
"""

from __future__ import annotations

import datetime
import math

import numpy as np

_MARGIN = 56.0
_TICK_TARGET = 6


def _nice_ticks(lo: float, hi: float):
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / _TICK_TARGET))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= _TICK_TARGET:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _color_diverging(v: float) -> str:
    """v in [-1, 1] -> blue / white / orange."""
    v = max(-1.0, min(1.0, v))
    if v < 0:
        t = 1.0 + v
        rgb = (int(33 + t * (255 - 33)), int(102 + t * (255 - 102)), int(172 + t * (255 - 172)))
    else:
        t = 1.0 - v
        rgb = (int(230 + t * (255 - 230)), int(97 + t * (255 - 97)), int(1 + t * (255 - 1)))
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def _color_phase(angle: float) -> str:
    """Angle in rad -> hue wheel."""
    h = (angle % (2 * math.pi)) / (2 * math.pi) * 360.0
    c = 0.85
    x = c * (1 - abs((h / 60.0) % 2 - 1))
    seg = int(h // 60) % 6
    r, g, b = [(c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)][seg]
    return f"rgb({int(255 * r)},{int(255 * g)},{int(255 * b)})"


class Canvas:
    """Plot area with linear data-to-pixel mapping and axis furniture."""

    def __init__(self, width, height, xlim, ylim, title="", xlabel="", ylabel="",
                 timestamp="auto"):
        self.width = width
        self.height = height
        self.xlim = xlim
        self.ylim = ylim
        self.parts = []
        self._frame(title, xlabel, ylabel)
        if timestamp == "auto":
            timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        self.timestamp = timestamp

    def x_px(self, x):
        x0, x1 = self.xlim
        return _MARGIN + (x - x0) / (x1 - x0) * (self.width - 2 * _MARGIN)

    def y_px(self, y):
        y0, y1 = self.ylim
        return self.height - _MARGIN - (y - y0) / (y1 - y0) * (self.height - 2 * _MARGIN)

    def _frame(self, title, xlabel, ylabel):
        w, h, m = self.width, self.height, _MARGIN
        self.parts.append(
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
            'fill="none" stroke="black" stroke-width="1"/>'
        )
        if title:
            self.parts.append(
                f'<text x="{w / 2}" y="{m - 18}" text-anchor="middle" '
                f'font-size="15">{title}</text>'
            )
        if xlabel:
            self.parts.append(
                f'<text x="{w / 2}" y="{h - 10}" text-anchor="middle" '
                f'font-size="13">{xlabel}</text>'
            )
        if ylabel:
            self.parts.append(
                f'<text x="14" y="{h / 2}" text-anchor="middle" font-size="13" '
                f'transform="rotate(-90 14 {h / 2})">{ylabel}</text>'
            )
        for t in _nice_ticks(*self.xlim):
            px = self.x_px(t)
            if _MARGIN - 0.5 <= px <= w - _MARGIN + 0.5:
                self.parts.append(
                    f'<line x1="{px:.1f}" y1="{h - m}" x2="{px:.1f}" y2="{h - m + 5}" '
                    'stroke="black"/>'
                )
                self.parts.append(
                    f'<text x="{px:.1f}" y="{h - m + 18}" text-anchor="middle" '
                    f'font-size="11">{_fmt(t)}</text>'
                )
        for t in _nice_ticks(*self.ylim):
            py = self.y_px(t)
            if _MARGIN - 0.5 <= py <= h - _MARGIN + 0.5:
                self.parts.append(
                    f'<line x1="{m - 5}" y1="{py:.1f}" x2="{m}" y2="{py:.1f}" stroke="black"/>'
                )
                self.parts.append(
                    f'<text x="{m - 8}" y="{py + 4:.1f}" text-anchor="end" '
                    f'font-size="11">{_fmt(t)}</text>'
                )

    def circle(self, x, y, r=3.0, color="steelblue", opacity=1.0):
        self.parts.append(
            f'<circle cx="{self.x_px(x):.2f}" cy="{self.y_px(y):.2f}" r="{r:.2f}" '
            f'fill="{color}" fill-opacity="{opacity:.3g}"/>'
        )

    def rect_data(self, x0, y0, x1, y1, color, stroke="none"):
        xa, xb = sorted((self.x_px(x0), self.x_px(x1)))
        ya, yb = sorted((self.y_px(y0), self.y_px(y1)))
        self.parts.append(
            f'<rect x="{xa:.2f}" y="{ya:.2f}" width="{xb - xa:.2f}" '
            f'height="{yb - ya:.2f}" fill="{color}" stroke="{stroke}"/>'
        )

    def polyline(self, xs, ys, color="black", width=1.5, dash=None):
        pts = " ".join(
            f"{self.x_px(x):.2f},{self.y_px(y):.2f}" for x, y in zip(xs, ys)
        )
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{extra}/>'
        )

    def text(self, x, y, s, color="black", size=12, anchor="start"):
        self.parts.append(
            f'<text x="{self.x_px(x):.2f}" y="{self.y_px(y):.2f}" fill="{color}" '
            f'font-size="{size}" text-anchor="{anchor}">{s}</text>'
        )

    def render(self) -> str:
        meta = (
            f"<metadata>generated {self.timestamp}</metadata>\n"
            if self.timestamp
            else ""
        )
        body = "\n".join(self.parts)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}" '
            'font-family="sans-serif">\n'
            f'{meta}<rect width="100%" height="100%" fill="white"/>\n'
            f"{body}\n</svg>\n"
        )


def _limits(values, pad=0.06):
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo
    return lo - pad * span, hi + pad * span


def scatter(x, y, *, sizes=None, colors=None, title="", xlabel="", ylabel="",
            width=520, height=460, timestamp="auto", equal_aspect=False) -> str:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xlim, ylim = _limits(x), _limits(y)
    if equal_aspect:
        cx, cy = 0.5 * (xlim[0] + xlim[1]), 0.5 * (ylim[0] + ylim[1])
        half = max(xlim[1] - xlim[0], ylim[1] - ylim[0]) / 2
        xlim, ylim = (cx - half, cx + half), (cy - half, cy + half)
    canvas = Canvas(width, height, xlim, ylim, title, xlabel, ylabel, timestamp)
    for i in range(x.size):
        r = 3.0 if sizes is None else float(sizes[i])
        c = "steelblue" if colors is None else colors[i]
        canvas.circle(x[i], y[i], r=r, color=c, opacity=0.85)
    return canvas.render()


def histogram(edges, counts, *, title="", xlabel="", ylabel="count",
              width=520, height=380, timestamp="auto") -> str:
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    canvas = Canvas(
        width, height, _limits(edges, 0.02), (0.0, max(1.0, counts.max()) * 1.08),
        title, xlabel, ylabel, timestamp,
    )
    for i, c in enumerate(counts):
        if c > 0:
            canvas.rect_data(edges[i], 0.0, edges[i + 1], float(c), "steelblue", "black")
    return canvas.render()


def heatmap(matrix, *, title="", xlabel="", ylabel="", vmax=None,
            width=560, height=520, timestamp="auto") -> str:
    m = np.asarray(matrix, dtype=float)
    n_rows, n_cols = m.shape
    scale = vmax if vmax else max(abs(float(m.min())), abs(float(m.max()))) or 1.0
    canvas = Canvas(width, height, (0, n_cols), (n_rows, 0), title, xlabel, ylabel,
                    timestamp)
    for i in range(n_rows):
        for j in range(n_cols):
            canvas.rect_data(j, i, j + 1, i + 1, _color_diverging(m[i, j] / scale))
    canvas.text(n_cols * 0.99, -0.02 * n_rows, f"scale: +-{_fmt(scale)}", anchor="end",
                size=11)
    return canvas.render()


def lines(series, *, title="", xlabel="", ylabel="", width=560, height=420,
          timestamp="auto", logy=False) -> str:
    """series: list of (label, xs, ys, color)."""
    all_x = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    all_y = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    if logy:
        all_y = np.log10(all_y[all_y > 0])
    canvas = Canvas(width, height, _limits(all_x, 0.02), _limits(all_y),
                    title, xlabel, ylabel + (" (log10)" if logy else ""), timestamp)
    for k, (label, xs, ys, color) in enumerate(series):
        ys = np.asarray(ys, dtype=float)
        if logy:
            ys = np.log10(np.maximum(ys, 1e-300))
        canvas.polyline(np.asarray(xs, dtype=float), ys, color=color)
        x_text = canvas.xlim[0] + (0.04 + 0.24 * k) * (canvas.xlim[1] - canvas.xlim[0])
        y_text = canvas.ylim[1] - 0.05 * (canvas.ylim[1] - canvas.ylim[0])
        canvas.text(x_text, y_text, label, color=color, size=12)
    return canvas.render()


def mode_pattern(xy_um, amplitudes, phases_rad, *, title="", width=520, height=500,
                 timestamp="auto") -> str:
    """Top view of a mode: marker size = amplitude, color = motional phase."""
    xy = np.asarray(xy_um, dtype=float)
    amp = np.asarray(amplitudes, dtype=float)
    r = 2.0 + 9.0 * amp / (amp.max() or 1.0)
    colors = [_color_phase(p) for p in np.asarray(phases_rad, dtype=float)]
    return scatter(
        xy[:, 0], xy[:, 1], sizes=r, colors=colors, title=title,
        xlabel="x (um)", ylabel="y (um)", width=width, height=height,
        timestamp=timestamp, equal_aspect=True,
    )
