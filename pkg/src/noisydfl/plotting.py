"""Standalone SVG line charts of logged metrics (log-scale y, one polyline per algorithm)."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

from .metrics import MeanRecord
from .runs import read_mean_csv

log = logging.getLogger(__name__)

METRICS = {"loss": "Loss", "consensus_error": "Consensus error"}
COLORS = {"FedNDL1": "#444444", "FedNDL2": "#1f4fd6", "FedNDL3": "#9b1fa8"}
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 50


def _series(records: list[MeanRecord], metric: str) -> dict[str, list[tuple[int, float, bool]]]:
    out: dict[str, list[tuple[int, float, bool]]] = defaultdict(list)
    for r in sorted(records, key=lambda r: (r.algorithm, r.t)):
        out[r.algorithm].append((r.t, getattr(r, metric), r.diverged > 0))
    return dict(out)


def render_svg(records: list[MeanRecord], metric: str, title: str) -> str:
    series = _series(records, metric)
    xs = [t for pts in series.values() for t, _, _ in pts]
    ys = [v for pts in series.values() for _, v, _ in pts if v > 0 and math.isfinite(v)]
    x_max = max(xs, default=1) or 1
    lo, hi = (min(ys), max(ys)) if ys else (1e-3, 1.0)
    floor = lo
    lo_e, hi_e = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if hi_e == lo_e:
        hi_e += 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(t: float) -> float:
        return LEFT + pw * t / x_max

    def py(v: float) -> float:
        v = max(v, floor)
        return TOP + ph * (hi_e - math.log10(v)) / (hi_e - lo_e)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT + pw / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<g class="axes" stroke="black" fill="none">'
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>',
    ]
    for e in range(lo_e, hi_e + 1):
        y = TOP + ph * (hi_e - e) / (hi_e - lo_e)
        parts.append(f'<line x1="{LEFT - 4}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>'
                     f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">1e{e}</text>')
    for k in range(5):
        t = x_max * k / 4
        parts.append(f'<text x="{px(t):.2f}" y="{TOP + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{t:g}</text>')
    parts.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">Iterations</text>')
    parts.append(f'<text transform="translate(16 {TOP + ph / 2}) rotate(-90)" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(METRICS.get(metric, metric))}</text>')

    for k, (alg, pts) in enumerate(sorted(series.items())):
        color = COLORS.get(alg, "#d62728")
        finite = [(t, v) for t, v, _ in pts if math.isfinite(v)]
        coords = " ".join(f"{px(t):.2f},{py(v):.2f}" for t, v in finite)
        parts.append(f'<polyline class="series" data-algorithm="{escape(alg)}" fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        truncated = pts and (pts[-1][2] or pts[-1][0] < x_max)
        if truncated and finite:
            t, v = finite[-1]
            parts.append(f'<g class="diverged-marker" stroke="{color}" stroke-width="2">'
                         f'<line x1="{px(t) - 5:.2f}" y1="{py(v) - 5:.2f}" x2="{px(t) + 5:.2f}" y2="{py(v) + 5:.2f}"/>'
                         f'<line x1="{px(t) - 5:.2f}" y1="{py(v) + 5:.2f}" x2="{px(t) + 5:.2f}" y2="{py(v) - 5:.2f}"/></g>')
        ly = TOP + 10 + 20 * k
        label = alg + (" (diverged)" if truncated else "")
        parts.append(f'<line x1="{WIDTH - RIGHT + 12}" y1="{ly}" x2="{WIDTH - RIGHT + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
                     f'<text class="legend" x="{WIDTH - RIGHT + 42}" y="{ly + 4}" font-family="sans-serif" font-size="12">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_plots(csv_paths, out_dir: str | Path) -> list[Path]:
    """One SVG per (metric, CSV); file names follow ``<metric>_<topology>_<noise>.svg``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in map(Path, csv_paths):
        records = read_mean_csv(path)
        stem = path.stem.removesuffix("_mean")
        if not records:
            log.warning("%s has no data rows; writing empty axes", path)
        for metric, label in METRICS.items():
            target = out_dir / f"{metric}_{stem}.svg"
            target.write_text(render_svg(records, metric, f"{label}: {stem}"), encoding="utf-8")
            written.append(target)
    return written
