"""Static SVG output for result tables: grid heatmaps and boxplots.

Output bytes depend only on the input records; all numbers are written
with fixed precision and elements are emitted in sorted order.
"""

from __future__ import annotations

from html import escape
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import NoData
from .experiments import SUMMARY, BoundaryFit, ExperimentRecord, cell_means

# viridis-like ramp, low -> high
_RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]

CELL = 28
MARGIN_LEFT = 60
MARGIN_TOP = 40
MARGIN_BOTTOM = 50
MARGIN_RIGHT = 90


def _f(x: float, nd: int = 2) -> str:
    return f"{x:.{nd}f}"


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    u = t - i
    rgb = [round(a + (b - a) * u) for a, b in zip(_RAMP[i], _RAMP[i + 1])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _svg(width: float, height: float, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width, 0)}" height="{_f(height, 0)}" '
        f'viewBox="0 0 {_f(width, 0)} {_f(height, 0)}" font-family="sans-serif" font-size="10">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def render_heatmap(
    records: Iterable[ExperimentRecord],
    metric: str,
    out_path: str | Path,
    boundary: BoundaryFit | None = None,
    title: str | None = None,
) -> str:
    """Cell means of ``metric`` with ``n`` on x and ``p`` on y (p grows upward).

    Colours scale linearly between the 5th and 95th percentiles of the cell
    means, so a few extreme cells near the interpolation ridge do not wash
    out the rest. Returns the SVG text after writing it.
    """
    means = cell_means(records, metric)
    if not means:
        raise NoData(f"no records for metric {metric!r}")
    ns = sorted({n for n, _ in means})
    ps = sorted({p for _, p in means})
    vals = np.array(list(means.values()))
    lo, hi = np.quantile(vals, [0.05, 0.95])
    span = hi - lo if hi > lo else 1.0
    width = MARGIN_LEFT + CELL * len(ns) + MARGIN_RIGHT
    height = MARGIN_TOP + CELL * len(ps) + MARGIN_BOTTOM
    body = [f'<text x="{MARGIN_LEFT}" y="20" font-size="12">{escape(title or metric)}</text>']

    def x_of(n: float) -> float:
        # linear in n through the column centres
        if len(ns) == 1:
            return MARGIN_LEFT + CELL / 2
        return MARGIN_LEFT + CELL / 2 + (n - ns[0]) / (ns[-1] - ns[0]) * CELL * (len(ns) - 1)

    def y_of(p: float) -> float:
        if len(ps) == 1:
            return MARGIN_TOP + CELL / 2
        return MARGIN_TOP + CELL / 2 + (ps[-1] - p) / (ps[-1] - ps[0]) * CELL * (len(ps) - 1)

    body.append('<g class="cells">')
    for (n, p), v in sorted(means.items()):
        col, row = ns.index(n), len(ps) - 1 - ps.index(p)
        x, y = MARGIN_LEFT + col * CELL, MARGIN_TOP + row * CELL
        body.append(
            f'<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
            f'fill="{_color((v - lo) / span)}" data-n="{n}" data-p="{p}" data-value="{v:.6g}"/>'
        )
    body.append("</g>")
    for i, n in enumerate(ns):
        body.append(f'<text x="{_f(MARGIN_LEFT + i * CELL + CELL / 2)}" y="{MARGIN_TOP + CELL * len(ps) + 14}" text-anchor="middle">{n}</text>')
    for j, p in enumerate(ps):
        row = len(ps) - 1 - j
        body.append(f'<text x="{MARGIN_LEFT - 6}" y="{_f(MARGIN_TOP + row * CELL + CELL / 2 + 3)}" text-anchor="end">{p}</text>')
    body.append(f'<text x="{_f(MARGIN_LEFT + CELL * len(ns) / 2)}" y="{height - 12}" text-anchor="middle">n (specimens)</text>')
    body.append(f'<text x="14" y="{_f(MARGIN_TOP + CELL * len(ps) / 2)}" transform="rotate(-90 14 {_f(MARGIN_TOP + CELL * len(ps) / 2)})" text-anchor="middle">p (landmarks)</text>')

    # colour bar
    bx = MARGIN_LEFT + CELL * len(ns) + 20
    for i in range(10):
        t = 1.0 - i / 9
        body.append(f'<rect x="{bx}" y="{MARGIN_TOP + i * 12}" width="12" height="12" fill="{_color(t)}"/>')
    body.append(f'<text x="{bx + 16}" y="{MARGIN_TOP + 9}">{hi:.3g}</text>')
    body.append(f'<text x="{bx + 16}" y="{MARGIN_TOP + 117}">{lo:.3g}</text>')

    if boundary is not None:
        x0, x1 = ns[0], ns[-1]
        body.append(
            f'<line class="boundary" x1="{_f(x_of(x0))}" y1="{_f(y_of(boundary.slope * x0 + boundary.intercept))}" '
            f'x2="{_f(x_of(x1))}" y2="{_f(y_of(boundary.slope * x1 + boundary.intercept))}" '
            f'stroke="#ffffff" stroke-width="2" stroke-dasharray="5,3" '
            f'data-slope="{boundary.slope:.4f}" data-intercept="{boundary.intercept:.4f}"/>'
        )
        body.append(
            f'<text x="{MARGIN_LEFT + CELL * len(ns)}" y="20" text-anchor="end">'
            f"p = {boundary.slope:.4f} n + {boundary.intercept:.4f}</text>"
        )

    svg = _svg(width, height, body)
    Path(out_path).write_text(svg, encoding="utf-8")
    return svg


def box_stats(values) -> dict[str, float]:
    """Median, quartiles (linear interpolation) and Tukey whiskers clipped to the data."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "min": float(v[0]),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(v[-1]),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
    }


def render_boxplot(
    records: Iterable[ExperimentRecord],
    group_key: str,
    out_path: str | Path,
    metric: str | None = None,
    title: str | None = None,
) -> str:
    """One box per distinct value of ``group_key`` over per-replicate records."""
    groups: dict[str, list[float]] = {}
    for r in records:
        if r.replicate == SUMMARY or (metric is not None and r.metric != metric):
            continue
        groups.setdefault(str(getattr(r, group_key)), []).append(r.value)
    if not groups:
        raise NoData("no records to plot")
    names = sorted(groups)
    stats = {g: box_stats(groups[g]) for g in names}
    lo = min(s["min"] for s in stats.values())
    hi = max(s["max"] for s in stats.values())
    span = hi - lo if hi > lo else 1.0
    plot_h = 240.0
    box_w, gap = 40.0, 40.0
    width = MARGIN_LEFT + len(names) * (box_w + gap) + gap
    height = MARGIN_TOP + plot_h + MARGIN_BOTTOM

    def y_of(v: float) -> float:
        return MARGIN_TOP + (hi - v) / span * plot_h

    body = [f'<text x="{MARGIN_LEFT}" y="20" font-size="12">{escape(title or (metric or group_key))}</text>']
    body.append(f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{_f(MARGIN_TOP + plot_h)}" stroke="#000"/>')
    for t in np.linspace(lo, hi, 5):
        body.append(f'<text x="{MARGIN_LEFT - 4}" y="{_f(y_of(t) + 3)}" text-anchor="end">{t:.3g}</text>')
    for i, g in enumerate(names):
        s = stats[g]
        x = MARGIN_LEFT + gap + i * (box_w + gap)
        cx = x + box_w / 2
        attrs = " ".join(f'data-{k.replace("_", "-")}="{v:.6g}"' for k, v in s.items())
        body.append(f'<g class="box" data-group="{escape(g)}" {attrs}>')
        body.append(f'<line class="whisker" x1="{_f(cx)}" y1="{_f(y_of(s["whisker_high"]))}" x2="{_f(cx)}" y2="{_f(y_of(s["q3"]))}" stroke="#000"/>')
        body.append(f'<line class="whisker" x1="{_f(cx)}" y1="{_f(y_of(s["q1"]))}" x2="{_f(cx)}" y2="{_f(y_of(s["whisker_low"]))}" stroke="#000"/>')
        body.append(f'<rect x="{_f(x)}" y="{_f(y_of(s["q3"]))}" width="{_f(box_w)}" height="{_f(y_of(s["q1"]) - y_of(s["q3"]))}" fill="#9ecae1" stroke="#000"/>')
        body.append(f'<line class="median" x1="{_f(x)}" y1="{_f(y_of(s["median"]))}" x2="{_f(x + box_w)}" y2="{_f(y_of(s["median"]))}" stroke="#000" stroke-width="2"/>')
        body.append("</g>")
        body.append(f'<text x="{_f(cx)}" y="{_f(MARGIN_TOP + plot_h + 16)}" text-anchor="middle">{escape(g)}</text>')
    svg = _svg(width, height, body)
    Path(out_path).write_text(svg, encoding="utf-8")
    return svg
