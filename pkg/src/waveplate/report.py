"""CSV, key-value and SVG emitters shared by the experiment runners.

Everything here is deterministic: fixed number formatting, fixed canvas,
no timestamps, so identical inputs give byte-identical files.
"""
from __future__ import annotations

import hashlib
import io
from typing import Mapping, Sequence

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17e}"


def format_csv(names: Sequence[str], columns: Sequence) -> str:
    """Header row then one line per sample; floats in 17-digit scientific notation."""
    cols = [np.asarray(c) if not isinstance(c, list) else c for c in columns]
    nrows = len(cols[0]) if cols else 0
    if any(len(c) != nrows for c in cols):
        raise ValueError("columns have different lengths")
    out = io.StringIO()
    out.write(",".join(names) + "\n")
    for i in range(nrows):
        out.write(",".join(_fmt(c[i]) for c in cols) + "\n")
    return out.getvalue()


def rows_to_csv(rows: Sequence[Mapping]) -> str:
    if not rows:
        raise ValueError("no rows")
    names = list(rows[0].keys())
    return format_csv(names, [[r[k] for r in rows] for k in names])


def format_kv(pairs: Mapping) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in pairs.items())


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 80, 20, 30, 60


def _ticks(lo, hi, k=5):
    if hi == lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def svg_plot(series, xlabel: str, ylabel: str, title: str = "", logy: bool = False,
             scatter: bool = False) -> str:
    """Render ``series`` (list of (x, y, label)) into a fixed-size SVG string."""
    xs = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    if xs.size == 0:
        raise ValueError("nothing to plot")
    if logy:
        ys = np.log10(ys)
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def X(x):
        return _ML + (x - x0) / (x1 - x0) * pw

    def Y(y):
        return _MT + ph - (y - y0) / (y1 - y0) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{X(t):.2f}" y="{_MT + ph + 18}" font-size="11" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        lab = f"1e{t:.2f}" if logy else f"{t:.3g}"
        out.append(f'<text x="{_ML - 6}" y="{Y(t) + 4:.2f}" font-size="11" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 15}" font-size="13" text-anchor="middle">{xlabel}</text>')
    ylab = f"{ylabel} (log10)" if logy else ylabel
    out.append(f'<text x="18" y="{_MT + ph / 2:.1f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 18 {_MT + ph / 2:.1f})">{ylab}</text>')
    if title:
        out.append(f'<text x="{_W / 2:.1f}" y="20" font-size="14" text-anchor="middle">{title}</text>')
    for k, (sx, sy, label) in enumerate(series):
        sx = np.asarray(sx, dtype=float)
        sy = np.log10(np.asarray(sy, dtype=float)) if logy else np.asarray(sy, dtype=float)
        col = colors[k % len(colors)]
        if scatter:
            for a, b in zip(sx, sy):
                out.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="2.5" fill="{col}"/>')
        else:
            pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(sx, sy))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        out.append(f'<text x="{_ML + 8}" y="{_MT + 16 + 14 * k}" font-size="11" fill="{col}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
