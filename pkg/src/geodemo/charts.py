"""Deterministic SVG renderings of the diagnostic reports.

Hand-built SVG strings: fixed coordinate formatting, no timestamps and no
generated ids, so byte-identical inputs yield byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .evaluate import BoxplotStats
from .kselect import ClustergramTable, GapReport
from .preprocess import CorrMatrix

_W, _H = 640, 420
_MARGIN = 55


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _svg(body: list[str], width: int = _W, height: int = _H) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    )
    style = (
        "<style>text{font-family:sans-serif;font-size:11px;}"
        ".axis{stroke:#333;stroke-width:1;}"
        ".grid{stroke:#ddd;stroke-width:0.5;}</style>"
    )
    return "\n".join([head, style, *body, "</svg>"]) + "\n"


class _Scale:
    """Linear data-to-pixel mapping."""

    def __init__(self, lo: float, hi: float, px_lo: float, px_hi: float):
        if hi == lo:
            hi = lo + 1.0
        self.lo, self.hi, self.px_lo, self.px_hi = lo, hi, px_lo, px_hi

    def __call__(self, v: float) -> float:
        t = (v - self.lo) / (self.hi - self.lo)
        return self.px_lo + t * (self.px_hi - self.px_lo)


def _axes(sx: _Scale, sy: _Scale, x_label: str, y_label: str) -> list[str]:
    parts = [
        f'<line class="axis" x1="{_fmt(sx.px_lo)}" y1="{_fmt(sy.px_lo)}" '
        f'x2="{_fmt(sx.px_hi)}" y2="{_fmt(sy.px_lo)}"/>',
        f'<line class="axis" x1="{_fmt(sx.px_lo)}" y1="{_fmt(sy.px_lo)}" '
        f'x2="{_fmt(sx.px_lo)}" y2="{_fmt(sy.px_hi)}"/>',
        f'<text x="{_fmt((sx.px_lo + sx.px_hi) / 2)}" y="{_H - 8}" '
        f'text-anchor="middle">{x_label}</text>',
        f'<text x="14" y="{_fmt((sy.px_lo + sy.px_hi) / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_fmt((sy.px_lo + sy.px_hi) / 2)})">{y_label}</text>',
    ]
    return parts


def corr_heatmap_svg(corr: CorrMatrix) -> str:
    """Correlation matrix as a blue/red cell grid."""
    p = len(corr.variables)
    cell = min(40.0, (min(_W, _H) - 2 * _MARGIN) / max(1, p))
    body = []
    for i in range(p):
        for j in range(p):
            r = float(corr.r[i, j])
            # positive blue, negative red, magnitude sets saturation
            if r >= 0:
                color = f"rgb({int(255 * (1 - r))},{int(255 * (1 - r))},255)"
            else:
                color = f"rgb(255,{int(255 * (1 + r))},{int(255 * (1 + r))})"
            x = _MARGIN + j * cell
            y = _MARGIN + i * cell
            body.append(
                f'<rect class="cell" x="{_fmt(x)}" y="{_fmt(y)}" '
                f'width="{_fmt(cell)}" height="{_fmt(cell)}" fill="{color}" '
                f'stroke="#999" stroke-width="0.3"><title>'
                f"{corr.variables[i]} vs {corr.variables[j]}: {r:.3f}</title></rect>"
            )
    for i, name in enumerate(corr.variables):
        y = _MARGIN + (i + 0.65) * cell
        body.append(f'<text x="{_fmt(_MARGIN - 4)}" y="{_fmt(y)}" text-anchor="end">{name}</text>')
        x = _MARGIN + (i + 0.5) * cell
        ytxt = _MARGIN + p * cell + 12
        body.append(
            f'<text x="{_fmt(x)}" y="{_fmt(ytxt)}" text-anchor="end" '
            f'transform="rotate(-60 {_fmt(x)} {_fmt(ytxt)})">{name}</text>'
        )
    side = int(_MARGIN * 2 + p * cell + 80)
    return _svg(body, width=max(_W, side), height=max(_H, side))


def gap_curve_svg(report: GapReport) -> str:
    """Gap means per k with one-standard-error bars."""
    ks = report.k_values
    gaps = report.gap_mean
    s = report.s_k_mean
    sx = _Scale(ks[0], ks[-1], _MARGIN, _W - _MARGIN)
    lo = float((gaps - s).min())
    hi = float((gaps + s).max())
    pad = 0.05 * (hi - lo or 1.0)
    sy = _Scale(lo - pad, hi + pad, _H - _MARGIN, _MARGIN)

    body = _axes(sx, sy, "k", "gap")
    pts = " ".join(f"{_fmt(sx(k))},{_fmt(sy(g))}" for k, g in zip(ks, gaps))
    body.append(f'<polyline fill="none" stroke="#2166ac" stroke-width="1.5" points="{pts}"/>')
    for k, g, e in zip(ks, gaps, s):
        x = sx(k)
        body.append(
            f'<line class="errorbar" x1="{_fmt(x)}" y1="{_fmt(sy(g - e))}" '
            f'x2="{_fmt(x)}" y2="{_fmt(sy(g + e))}" stroke="#2166ac" stroke-width="1"/>'
        )
        body.append(
            f'<circle class="point" cx="{_fmt(x)}" cy="{_fmt(sy(g))}" r="3" fill="#2166ac"/>'
        )
        body.append(
            f'<text x="{_fmt(x)}" y="{_H - _MARGIN + 16}" text-anchor="middle">{k}</text>'
        )
    body.append(
        f'<text x="{_fmt(sx(report.modal_k))}" y="{_MARGIN - 8}" text-anchor="middle">'
        f"modal k = {report.modal_k}</text>"
    )
    return _svg(body)


def clustergram_svg(table: ClustergramTable) -> str:
    """Weighted PC1 cluster means across k, one polyline bundle per repetition."""
    ks = table.k_values
    means = [r.weighted_pc1_mean for r in table.rows]
    lo, hi = min(means), max(means)
    pad = 0.05 * ((hi - lo) or 1.0)
    sx = _Scale(ks[0], ks[-1], _MARGIN, _W - _MARGIN)
    sy = _Scale(lo - pad, hi + pad, _H - _MARGIN, _MARGIN)
    n = max(sum(r.size for r in table.rows if r.rep == 0 and r.k == ks[0]), 1)

    body = _axes(sx, sy, "k", "weighted PC1 mean")
    by_rep_k: dict[tuple[int, int], dict[int, object]] = {}
    for r in table.rows:
        by_rep_k.setdefault((r.rep, r.k), {})[r.cluster_id] = r
    for (rep, k), clusters in sorted(by_rep_k.items()):
        if k == ks[0]:
            continue
        parents = by_rep_k.get((rep, k - 1))
        if parents is None:
            continue
        for r in clusters.values():
            if r.parent_cluster_id is None or r.parent_cluster_id not in parents:
                continue
            p = parents[r.parent_cluster_id]
            body.append(
                f'<line class="link" x1="{_fmt(sx(k - 1))}" '
                f'y1="{_fmt(sy(p.weighted_pc1_mean))}" x2="{_fmt(sx(k))}" '
                f'y2="{_fmt(sy(r.weighted_pc1_mean))}" stroke="#888" '
                f'stroke-width="0.4" stroke-opacity="0.35"/>'
            )
    for r in table.rows:
        radius = 1.0 + 6.0 * np.sqrt(r.size / n)
        body.append(
            f'<circle class="node" cx="{_fmt(sx(r.k))}" cy="{_fmt(sy(r.weighted_pc1_mean))}" '
            f'r="{_fmt(radius)}" fill="#2166ac" fill-opacity="0.25"/>'
        )
    for k in ks:
        body.append(
            f'<text x="{_fmt(sx(k))}" y="{_H - _MARGIN + 16}" text-anchor="middle">{k}</text>'
        )
    return _svg(body)


def boxplot_svg(stats: BoxplotStats) -> str:
    """Distance-to-center box and whiskers, one box per cluster."""
    n = len(stats.clusters)
    values = [v for c in stats.clusters for v in (c.minimum, c.maximum)]
    values += [d for c in stats.clusters for _, d in c.outliers]
    lo, hi = 0.0, max(values) if values else 1.0
    pad = 0.05 * (hi - lo or 1.0)
    sy = _Scale(lo, hi + pad, _H - _MARGIN, _MARGIN)
    sx = _Scale(-0.5, n - 0.5, _MARGIN, _W - _MARGIN)
    half = min(28.0, 0.35 * (sx(1) - sx(0)) if n > 1 else 28.0)

    body = _axes(sx, sy, "cluster", "distance to center")
    for i, c in enumerate(stats.clusters):
        x = sx(i)
        body.append(
            f'<line class="whisker" x1="{_fmt(x)}" y1="{_fmt(sy(c.whisker_low))}" '
            f'x2="{_fmt(x)}" y2="{_fmt(sy(c.q1))}" stroke="#333" stroke-width="1"/>'
        )
        body.append(
            f'<line class="whisker" x1="{_fmt(x)}" y1="{_fmt(sy(c.q3))}" '
            f'x2="{_fmt(x)}" y2="{_fmt(sy(c.whisker_high))}" stroke="#333" stroke-width="1"/>'
        )
        body.append(
            f'<rect class="box" x="{_fmt(x - half)}" y="{_fmt(sy(c.q3))}" '
            f'width="{_fmt(2 * half)}" height="{_fmt(sy(c.q1) - sy(c.q3))}" '
            f'fill="#c6dbef" stroke="#333" stroke-width="1"/>'
        )
        body.append(
            f'<line class="median" x1="{_fmt(x - half)}" y1="{_fmt(sy(c.median))}" '
            f'x2="{_fmt(x + half)}" y2="{_fmt(sy(c.median))}" stroke="#333" stroke-width="1.5"/>'
        )
        for code, d in c.outliers:
            body.append(
                f'<circle class="outlier" cx="{_fmt(x)}" cy="{_fmt(sy(d))}" r="2.5" '
                f'fill="none" stroke="#b2182b" stroke-width="1">'
                f"<title>{code}: {d:.3f}</title></circle>"
            )
        body.append(
            f'<text x="{_fmt(x)}" y="{_H - _MARGIN + 16}" text-anchor="middle">{c.cluster_id}</text>'
        )
    return _svg(body)
