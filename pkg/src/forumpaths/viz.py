"""Superimposed-path density plots and dendrograms as standalone SVG."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .cluster import Dendrogram
from .errors import DataError
from .features import ForumFeatures
from .paths import ForumArchive

# Heat palette from few paths (dark) to many (bright).
_STOPS = (
    (0.00, (20, 20, 80)),
    (0.25, (40, 90, 200)),
    (0.50, (40, 190, 170)),
    (0.75, (250, 210, 60)),
    (1.00, (220, 40, 30)),
)
_PLOT = 480
_MARGIN = 64
_LEGEND_W = 150


@dataclass(frozen=True)
class PathDensityGrid:
    """Number of distinct user paths through each lattice point.

    ``counts[x, y]`` covers the square ``[0, extent]**2``.
    """

    extent: int
    counts: np.ndarray
    n_users: int

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "count"])
        xs, ys = np.nonzero(self.counts)
        for x, y in sorted(zip(xs.tolist(), ys.tolist())):
            w.writerow([x, y, int(self.counts[x, y])])
        return buf.getvalue()


def path_density_grid(archive: ForumArchive) -> PathDensityGrid:
    paths = archive.paths()
    if not paths:
        raise DataError("archive is empty")
    extent = max(int(p.points.max()) for p in paths)
    counts = np.zeros((extent + 1, extent + 1), dtype=np.int64)
    for p in paths:
        # a monotone lattice walk never revisits a point
        counts[p.points[:, 0], p.points[:, 1]] += 1
    return PathDensityGrid(extent, counts, len(paths))


def _color(t: float) -> str:
    t = min(1.0, max(0.0, t))
    for (t0, c0), (t1, c1) in zip(_STOPS, _STOPS[1:]):
        if t <= t1:
            w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = [round(a + (b - a) * w) for a, b in zip(c0, c1)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % _STOPS[-1][1]


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_ticks(vmax: float, target: int = 5) -> list[float]:
    if vmax <= 0:
        return [0.0]
    raw = vmax / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    n = int(math.floor(vmax / step + 1e-9))
    return [i * step for i in range(n + 1)]


def _ray_end(slope: float, extent: float) -> tuple[float, float]:
    if slope <= 1.0:
        return extent, slope * extent
    return extent / slope, extent


def render_forum_plot(
    grid: PathDensityGrid,
    features: ForumFeatures,
    log_scale: bool = True,
    title: str | None = None,
) -> str:
    """Heat map of path counts with baseline and slope rays.

    The baseline ``y = base * x`` is dashed and the slope line solid.  A dot
    on the slope line marks the average path length, placed where a path of
    ``length`` unit steps along the line would end: ``x = length / (1 + slope)``.
    """
    if grid.counts.sum() == 0:
        raise DataError("density grid is empty")
    if features.slope is None:
        raise DataError("plot needs the slope feature")
    m = grid.extent
    span = max(m, 1)
    cell = _PLOT / (span + 1)
    left, top = _MARGIN, _MARGIN
    width = _MARGIN * 2 + _PLOT + _LEGEND_W
    height = _MARGIN * 2 + _PLOT

    def px(x: float) -> float:
        return left + (x + 0.5) * cell

    def py(y: float) -> float:
        return top + _PLOT - (y + 0.5) * cell

    cmax = int(grid.counts.max())
    norm = math.log1p(cmax) if log_scale else float(cmax)
    title = title or f"Forum {features.forum}"
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<rect x="{left}" y="{top}" width="{_PLOT}" height="{_PLOT}" fill="#f4f4f4" '
        'stroke="#888888"/>',
        '<g class="cells">',
    ]
    xs, ys = np.nonzero(grid.counts)
    for x, y in sorted(zip(xs.tolist(), ys.tolist())):
        c = int(grid.counts[x, y])
        t = (math.log1p(c) if log_scale else c) / norm if norm > 0 else 1.0
        out.append(
            f'<rect x="{_f(left + x * cell)}" y="{_f(top + _PLOT - (y + 1) * cell)}" '
            f'width="{_f(cell)}" height="{_f(cell)}" fill="{_color(t)}"/>'
        )
    out.append("</g>")

    bx, by = _ray_end(features.base, m)
    sx, sy = _ray_end(features.slope, m)
    out.append(
        f'<line class="ray baseline" x1="{_f(px(0))}" y1="{_f(py(0))}" x2="{_f(px(bx))}" '
        f'y2="{_f(py(by))}" stroke="#d62728" stroke-width="2" stroke-dasharray="8,5"/>'
    )
    out.append(
        f'<line class="ray slope" x1="{_f(px(0))}" y1="{_f(py(0))}" x2="{_f(px(sx))}" '
        f'y2="{_f(py(sy))}" stroke="#d62728" stroke-width="2"/>'
    )
    dot_x = features.length / (1.0 + features.slope)
    dot_y = features.slope * dot_x
    out.append(
        f'<circle class="mean-length" cx="{_f(px(min(dot_x, m)))}" '
        f'cy="{_f(py(min(dot_y, m)))}" r="5" fill="#1f77b4" stroke="#ffffff"/>'
    )

    # axes
    out.append('<g class="axes" font-family="sans-serif" font-size="11" fill="#222222">')
    for v in _nice_ticks(m):
        out.append(
            f'<text x="{_f(px(v))}" y="{_f(top + _PLOT + 16)}" '
            f'text-anchor="middle">{v:g}</text>'
        )
        out.append(
            f'<text x="{_f(left - 6)}" y="{_f(py(v) + 4)}" text-anchor="end">{v:g}</text>'
        )
    out.append(
        f'<text x="{_f(left + _PLOT / 2)}" y="{_f(top + _PLOT + 38)}" '
        'text-anchor="middle" font-size="13">number of posts</text>'
    )
    out.append(
        f'<text x="{_f(left - 44)}" y="{_f(top + _PLOT / 2)}" text-anchor="middle" '
        f'font-size="13" transform="rotate(-90 {_f(left - 44)} {_f(top + _PLOT / 2)})">'
        "number of replies received</text>"
    )
    out.append(
        f'<text x="{_f(left + _PLOT / 2)}" y="{_f(top - 24)}" text-anchor="middle" '
        f'font-size="15">{escape(title)}</text>'
    )
    out.append("</g>")

    # legend
    lx = left + _PLOT + 20
    out.append('<g class="legend" font-family="sans-serif" font-size="11" fill="#222222">')
    out.append(
        f'<path class="legend-swatch" d="M {lx} {top + 10} h 24" stroke="#d62728" '
        'stroke-width="2" stroke-dasharray="8,5"/>'
    )
    out.append(f'<text x="{lx + 30}" y="{top + 14}">baseline {features.base:.3f}</text>')
    out.append(
        f'<path class="legend-swatch" d="M {lx} {top + 30} h 24" stroke="#d62728" '
        'stroke-width="2"/>'
    )
    out.append(f'<text x="{lx + 30}" y="{top + 34}">slope {features.slope:.3f}</text>')
    out.append(f'<circle cx="{lx + 12}" cy="{top + 50}" r="5" fill="#1f77b4"/>')
    out.append(f'<text x="{lx + 30}" y="{top + 54}">mean length {features.length:.2f}</text>')
    scale_name = "log" if log_scale else "linear"
    out.append(f'<text x="{lx}" y="{top + 84}">paths per point ({scale_name})</text>')
    for i in range(11):
        t = i / 10
        out.append(
            f'<rect x="{lx}" y="{_f(top + 200 - i * 10)}" width="16" height="10" '
            f'fill="{_color(t)}"/>'
        )
    out.append(f'<text x="{lx + 22}" y="{top + 208}">1</text>')
    out.append(f'<text x="{lx + 22}" y="{top + 108}">{cmax}</text>')
    if features.slope == 0.0:
        out.append(
            f'<text class="warning" x="{lx}" y="{top + 240}" fill="#b00000">'
            "degenerate slope (no replies)</text>"
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_dendrogram(d: Dendrogram, title: str = "Hierarchical clustering") -> str:
    """Rectangular dendrogram: one bracket per merge, leaves along the bottom."""
    n = d.n_leaves
    order = d.leaf_order()
    slot = {leaf: i for i, leaf in enumerate(order)}
    step = 60
    width = _MARGIN * 2 + step * max(n - 1, 1)
    plot_h = 320
    height = _MARGIN + plot_h + 110
    top_h = max((mg.height for mg in d.merges), default=1.0) or 1.0
    base_y = _MARGIN + plot_h

    def hy(h: float) -> float:
        return base_y - plot_h * h / top_h

    xpos = {leaf: _MARGIN + step * slot[leaf] for leaf in range(n)}
    ypos = {leaf: base_y for leaf in range(n)}
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        '<g class="merges" fill="none" stroke="#1f3f7f" stroke-width="1.5">',
    ]
    for i, mg in enumerate(d.merges):
        xa, xb = xpos[mg.a], xpos[mg.b]
        ya, yb = ypos[mg.a], ypos[mg.b]
        yh = hy(mg.height)
        out.append(
            f'<path class="merge" data-height="{mg.height:.6g}" '
            f'd="M {_f(xa)} {_f(ya)} V {_f(yh)} H {_f(xb)} V {_f(yb)}"/>'
        )
        xpos[n + i] = (xa + xb) / 2
        ypos[n + i] = yh
    out.append("</g>")
    out.append('<g class="labels" font-family="sans-serif" font-size="12" fill="#222222">')
    for leaf in order:
        x = xpos[leaf]
        out.append(
            f'<text x="{_f(x)}" y="{_f(base_y + 14)}" text-anchor="end" '
            f'transform="rotate(-40 {_f(x)} {_f(base_y + 14)})">{escape(d.labels[leaf])}</text>'
        )
    out.append("</g>")
    ax = _MARGIN / 2
    out.append('<g class="axes" font-family="sans-serif" font-size="11" fill="#222222">')
    out.append(
        f'<line x1="{_f(ax)}" y1="{_f(base_y)}" x2="{_f(ax)}" y2="{_f(hy(top_h))}" '
        'stroke="#444444"/>'
    )
    for v in _nice_ticks(top_h, 4):
        out.append(
            f'<text x="{_f(ax - 4)}" y="{_f(hy(v) + 4)}" text-anchor="end">{v:g}</text>'
        )
    out.append(
        f'<text x="{_f(width / 2)}" y="{_f(_MARGIN / 2)}" text-anchor="middle" '
        f'font-size="15">{escape(title)}</text>'
    )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
