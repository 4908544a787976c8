"""Artifact writers: RFC-4180 CSV, stable JSON and minimal SVG line charts."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f4e79", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#5d6d7e")
DASHES = ("", "6,3", "2,2", "8,3,2,3", "4,4", "1,3")


def _num(v):
    v = float(v)
    return repr(v) if math.isfinite(v) else ""


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns with a header row (CRLF line ends, UTF-8)."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_num(c[i]) if np.issubdtype(c.dtype, np.number) else str(c[i]) for c in cols])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj) -> str:
    """Stable JSON: sorted keys, non-finite floats as ``null``, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


# -- SVG ----------------------------------------------------------------------


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return "%.0e" % v
    return ("%.4g" % v).rstrip()


def line_chart(
    path,
    series,
    title: str = "",
    xlabel: str = "x",
    ylabel: str = "",
    logx: bool = False,
    vlines=(),
    width: int = 640,
    height: int = 420,
) -> None:
    """Write a line chart.

    Parameters
    ----------
    series : list of ``(label, x, y)``
        Non-finite points break the line.
    vlines : list of ``(x, label_or_None)`` or ``(x, label, series_index)``
        Vertical dotted markers, colored like the series they belong to.
    """
    ml, mr, mt, mb = 70, 20, 36, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs_all, ys_all = [], []
    for _, x, y in series:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y) & ((x > 0) if logx else True)
        xs_all.append(x[ok])
        ys_all.append(y[ok])
    xcat = np.concatenate(xs_all) if xs_all else np.array([0.0, 1.0])
    ycat = np.concatenate(ys_all) if ys_all else np.array([0.0, 1.0])
    if xcat.size == 0:
        xcat, ycat = np.array([1.0, 10.0]), np.array([0.0, 1.0])
    fx = np.log10 if logx else (lambda a: np.asarray(a, float))
    x_lo, x_hi = float(fx(xcat.min())), float(fx(xcat.max()))
    y_lo, y_hi = float(ycat.min()), float(ycat.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(v):
        return ml + (float(fx(v)) - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return mt + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" viewBox="0 0 %d %d" '
        'font-family="sans-serif" font-size="11">' % (width, height, width, height),
        '<rect width="100%" height="100%" fill="white"/>',
        '<text x="%d" y="20" font-size="13" text-anchor="middle">%s</text>' % (width // 2, escape(title)),
        '<rect x="%d" y="%d" width="%d" height="%d" fill="none" stroke="#444"/>' % (ml, mt, pw, ph),
    ]
    # axes ticks
    if logx:
        xt = [10.0**k for k in range(math.ceil(x_lo), math.floor(x_hi) + 1)] or [10**x_lo]
    else:
        xt = _nice_ticks(x_lo, x_hi)
    for t in xt:
        X = px(t)
        out.append('<line x1="%.2f" y1="%d" x2="%.2f" y2="%d" stroke="#ddd"/>' % (X, mt, X, mt + ph))
        out.append('<text x="%.2f" y="%d" text-anchor="middle">%s</text>' % (X, mt + ph + 15, _fmt(t)))
    for t in _nice_ticks(y_lo, y_hi):
        Y = py(t)
        out.append('<line x1="%d" y1="%.2f" x2="%d" y2="%.2f" stroke="#ddd"/>' % (ml, Y, ml + pw, Y))
        out.append('<text x="%d" y="%.2f" text-anchor="end">%s</text>' % (ml - 5, Y + 4, _fmt(t)))
    out.append('<text x="%d" y="%d" text-anchor="middle">%s</text>' % (ml + pw // 2, height - 12, escape(xlabel)))
    out.append(
        '<text x="16" y="%d" text-anchor="middle" transform="rotate(-90 16 %d)">%s</text>'
        % (mt + ph // 2, mt + ph // 2, escape(ylabel))
    )
    for k, v in enumerate(vlines):
        xv, label = v[0], v[1]
        color = PALETTE[v[2] % len(PALETTE)] if len(v) > 2 else "#888"
        if logx and xv <= 0:
            continue
        X = px(xv)
        if ml <= X <= ml + pw:
            out.append(
                '<line x1="%.2f" y1="%d" x2="%.2f" y2="%d" stroke="%s" stroke-dasharray="1,3"/>' % (X, mt, X, mt + ph, color)
            )
            if label:
                out.append('<text x="%.2f" y="%d" fill="%s">%s</text>' % (X + 3, mt + 12 + 12 * k, color, escape(label)))
    for i, ((label, _, _), x, y) in enumerate(zip(series, xs_all, ys_all)):
        color = PALETTE[i % len(PALETTE)]
        dash = DASHES[(i // len(PALETTE)) % len(DASHES)] if i >= len(PALETTE) else DASHES[i % len(DASHES)]
        pts = " ".join("%.2f,%.2f" % (px(a), py(b)) for a, b in zip(x, y))
        if pts:
            extra = ' stroke-dasharray="%s"' % dash if dash else ""
            out.append('<polyline fill="none" stroke="%s" stroke-width="1.6"%s points="%s"/>' % (color, extra, pts))
        ly = mt + 14 + 14 * i
        out.append('<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="%s" stroke-width="2"/>' % (ml + pw - 120, ly - 4, ml + pw - 100, ly - 4, color))
        out.append('<text x="%d" y="%d">%s</text>' % (ml + pw - 95, ly, escape(str(label))))
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
