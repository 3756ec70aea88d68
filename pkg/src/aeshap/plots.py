"""Static SVG charts: overlaid ROC curves, ranking bars, per-instance contributions.

Plain string templating keeps the output byte-stable across runs and
platforms, which a plotting backend would not guarantee.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .evaluation import RocCurve
from .selection import FeatureRanking
from .shap import ShapExplanation

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd")
RED = "#d62728"
BLUE = "#1f77b4"
FONT = 'font-family="sans-serif"'


def _f(v: float) -> str:
    return f"{v:.2f}"


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>',
                      *body, "</svg>"]) + "\n"


def roc_svg(curves: Mapping[str, RocCurve], size: int = 420) -> str:
    """One polyline per model on shared unit axes, AUC in the legend."""
    m = 50
    w = size - 2 * m

    def px(fpr, tpr):
        return m + fpr * w, m + (1.0 - tpr) * w

    body = [
        f'<rect x="{m}" y="{m}" width="{w}" height="{w}" fill="none" stroke="black"/>',
        f'<line x1="{m}" y1="{m + w}" x2="{m + w}" y2="{m}" stroke="#999" stroke-dasharray="4 4"/>',
        f'<text x="{size / 2}" y="{size - 12}" text-anchor="middle" {FONT} font-size="12">'
        "False positive rate</text>",
        f'<text x="14" y="{size / 2}" text-anchor="middle" {FONT} font-size="12" '
        f'transform="rotate(-90 14 {size / 2})">True positive rate</text>',
        f'<text x="{size / 2}" y="30" text-anchor="middle" {FONT} font-size="14">ROC curves</text>',
    ]
    for t in (0.0, 0.5, 1.0):
        x, y = px(t, t)
        body.append(f'<text x="{_f(x)}" y="{m + w + 14}" text-anchor="middle" {FONT} '
                    f'font-size="10">{t:.1f}</text>')
        body.append(f'<text x="{m - 6}" y="{_f(y + 3)}" text-anchor="end" {FONT} '
                    f'font-size="10">{t:.1f}</text>')
    for i, (name, c) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in (px(a, b) for a, b in zip(c.fpr, c.tpr)))
        body.append(f'<polyline class="roc" data-model="{escape(name)}" fill="none" '
                    f'stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = m + w - 14 - 16 * (len(curves) - 1 - i)
        body.append(f'<text x="{m + w - 8}" y="{ly}" text-anchor="end" {FONT} font-size="11" '
                    f'fill="{color}">{escape(name)} (AUC = {c.auc:.3f})</text>')
    return _doc(size, size, body)


def ranking_svg(ranking: FeatureRanking, k: int | None = None, width: int = 640) -> str:
    """Horizontal bars for the top `k` features, rank 1 at the top."""
    entries = ranking.entries[: (k or len(ranking))]
    bar, gap, left, top = 14, 4, 200, 40
    height = top + len(entries) * (bar + gap) + 30
    span = width - left - 70
    vmax = max((e.importance for e in entries), default=0.0) or 1.0
    body = [f'<text x="{width / 2}" y="22" text-anchor="middle" {FONT} font-size="14">'
            f"Top {len(entries)} features by mean |SHAP value|</text>"]
    for i, e in enumerate(entries):
        y = top + i * (bar + gap)
        bw = span * e.importance / vmax
        body.append(f'<text x="{left - 6}" y="{y + bar - 3}" text-anchor="end" {FONT} '
                    f'font-size="11">{escape(e.name)}</text>')
        body.append(f'<rect class="bar" data-rank="{e.rank}" data-name="{escape(e.name)}" '
                    f'data-importance="{e.importance!r}" x="{left}" y="{y}" width="{_f(bw)}" '
                    f'height="{bar}" fill="{RED}"/>')
        body.append(f'<text x="{_f(left + bw + 4)}" y="{y + bar - 3}" {FONT} '
                    f'font-size="10">{e.importance:.3g}</text>')
    return _doc(width, height, body)


def instance_svg(expl: ShapExplanation, max_features: int = 20, width: int = 640,
                 title: str | None = None) -> str:
    """Diverging bars of signed contributions, largest magnitude first.

    Red bars raise the reconstruction error, blue bars lower it.
    """
    d = len(expl.phi)
    names = expl.feature_names or tuple(f"x{i}" for i in range(d))
    order = np.lexsort((np.arange(d), -np.abs(expl.phi)))[:max_features]
    bar, gap, top = 14, 4, 64
    mid = width * 0.6
    half = width * 0.35
    height = top + len(order) * (bar + gap) + 20
    vmax = float(np.abs(expl.phi[order]).max()) if len(order) else 0.0
    vmax = vmax or 1.0
    title = title or f"Instance {expl.instance_index}: contributions to reconstruction error"
    body = [
        f'<text x="{width / 2}" y="20" text-anchor="middle" {FONT} font-size="14">'
        f"{escape(title)}</text>",
        f'<text class="annotation" x="{width / 2}" y="40" text-anchor="middle" {FONT} '
        f'font-size="11">base value = {expl.base_value:.4g}, output = {expl.full_value:.4g}</text>',
        f'<line x1="{_f(mid)}" y1="{top - 4}" x2="{_f(mid)}" y2="{height - 16}" stroke="black"/>',
    ]
    for i, j in enumerate(order):
        p = float(expl.phi[j])
        y = top + i * (bar + gap)
        bw = half * abs(p) / vmax
        x = mid if p >= 0 else mid - bw
        sign, color = ("pos", RED) if p >= 0 else ("neg", BLUE)
        body.append(f'<text x="{_f(mid - half - 6)}" y="{y + bar - 3}" text-anchor="end" '
                    f'{FONT} font-size="11">{escape(names[j])}</text>')
        body.append(f'<rect class="bar {sign}" data-feature="{escape(names[j])}" '
                    f'data-phi="{p!r}" x="{_f(x)}" y="{y}" width="{_f(bw)}" height="{bar}" '
                    f'fill="{color}"/>')
    return _doc(width, height, body)


def write_svg(text: str, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def emit_plots(curves: Mapping[str, RocCurve], ranking: FeatureRanking, k: int,
               explanations: Sequence[ShapExplanation], out_dir: str | Path,
               titles: Mapping[int, str] | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    titles = titles or {}
    paths = [write_svg(roc_svg(curves), out / "roc.svg"),
             write_svg(ranking_svg(ranking, k), out / "ranking.svg")]
    for e in explanations:
        paths.append(write_svg(instance_svg(e, title=titles.get(e.instance_index)),
                               out / f"instance_{e.instance_index}.svg"))
    return paths
