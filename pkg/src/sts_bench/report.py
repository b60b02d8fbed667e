"""CSV tables and paired box-plot SVGs for analysis results."""
from __future__ import annotations

import csv
import io
from typing import List, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .harness import AnalysisResult

CSV_COLUMNS = ("value", "sts", "p", "significant", "mean_ref", "mean_exp",
               "node_auc_exp", "edge_auc_exp", "diverged")
# fingerprint entries that must agree before results may share one table
PROTOCOL_FIELDS = ("dataset", "master_seed", "repetitions", "metric")

WIDTH, HEIGHT = 800, 400
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 60, 20, 50, 50
REF_COLOR, EXP_COLOR = "#3b6fb6", "#8a9a2b"


class MixedFingerprints(ValueError):
    pass


def check_compatible(results: Sequence[AnalysisResult]) -> None:
    """Raise :class:`MixedFingerprints` if results come from different protocols."""
    if not results:
        return
    first = {k: results[0].fingerprint.get(k) for k in PROTOCOL_FIELDS}
    for r in results[1:]:
        for k in PROTOCOL_FIELDS:
            if r.fingerprint.get(k) != first[k]:
                raise MixedFingerprints(f"results disagree on {k!r}: {first[k]!r} vs {r.fingerprint.get(k)!r}")


def _label(result: AnalysisResult, index: int) -> str:
    if result.label:
        return result.label.partition("=")[2] or result.label
    return str(index)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def csv_rows(results: Sequence[AnalysisResult]) -> List[dict]:
    rows = []
    for i, r in enumerate(results):
        rows.append({
            "value": _label(r, i),
            "sts": _fmt(r.sts),
            "p": _fmt(None if r.test is None else r.test.p_value),
            "significant": str(r.significant).lower(),
            "mean_ref": _fmt(r.mean("perf_ref")),
            "mean_exp": _fmt(r.mean("perf_exp")),
            "node_auc_exp": _fmt(r.mean("node_auc_exp")),
            "edge_auc_exp": _fmt(r.mean("edge_auc_exp")),
            "diverged": str(r.diverged),
        })
    return rows


def to_csv(results: Sequence[AnalysisResult]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(csv_rows(results))
    return buf.getvalue()


def box_stats(values: Sequence[float]) -> dict:
    """Quartiles, median and Tukey whiskers (furthest points within 1.5 IQR)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("box_stats needs at least one value")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return {"q1": float(q1), "median": float(med), "q3": float(q3),
            "low": float(inside.min()), "high": float(inside.max()),
            "outliers": [float(x) for x in v if x < inside.min() or x > inside.max()]}


def _num(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def to_svg(results: Sequence[AnalysisResult], title: str = "") -> str:
    """One column per result: reference and explanation-student boxes, STS on top."""
    data = [(r.column("perf_ref"), r.column("perf_exp")) for r in results]
    every = [x for pair in data for side in pair for x in side]
    lo, hi = (min(every), max(every)) if every else (0.0, 1.0)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.05, hi + 0.05
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def y(v: float) -> float:
        return MARGIN_TOP + (hi - v) / (hi - lo) * plot_h

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
           f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    axis_x = MARGIN_LEFT
    out.append(f'<line x1="{axis_x}" y1="{MARGIN_TOP}" x2="{axis_x}" y2="{MARGIN_TOP + plot_h}" stroke="black"/>')
    out.append(f'<line x1="{axis_x}" y1="{MARGIN_TOP + plot_h}" x2="{WIDTH - MARGIN_RIGHT}" '
               f'y2="{MARGIN_TOP + plot_h}" stroke="black"/>')
    for tick in np.linspace(lo, hi, 5):
        ty = y(tick)
        out.append(f'<line x1="{axis_x - 4}" y1="{ty:.2f}" x2="{axis_x}" y2="{ty:.2f}" stroke="black"/>')
        out.append(f'<text x="{axis_x - 6}" y="{ty + 4:.2f}" text-anchor="end">{tick:.3f}</text>')

    n = max(len(results), 1)
    slot = plot_w / n
    box_w = min(40.0, slot / 3)
    for i, (r, (ref, exp)) in enumerate(zip(results, data)):
        cx = MARGIN_LEFT + slot * (i + 0.5)
        out.append(f'<g class="column" data-index="{i}">')
        for values, color, dx, kind in ((ref, REF_COLOR, -0.6, "reference"), (exp, EXP_COLOR, 0.6, "explanation")):
            if not values:
                continue
            b = box_stats(values)
            bx = cx + dx * box_w - box_w / 2
            mid = bx + box_w / 2
            out.append(f'<g class="box {kind}" stroke="{color}">')
            out.append(f'<line x1="{mid:.2f}" y1="{y(b["high"]):.2f}" x2="{mid:.2f}" y2="{y(b["q3"]):.2f}"/>')
            out.append(f'<line x1="{mid:.2f}" y1="{y(b["q1"]):.2f}" x2="{mid:.2f}" y2="{y(b["low"]):.2f}"/>')
            for w in (b["high"], b["low"]):
                out.append(f'<line x1="{bx + box_w / 4:.2f}" y1="{y(w):.2f}" x2="{bx + 3 * box_w / 4:.2f}" y2="{y(w):.2f}"/>')
            top = y(b["q3"])
            out.append(f'<rect x="{bx:.2f}" y="{top:.2f}" width="{box_w:.2f}" '
                       f'height="{max(y(b["q1"]) - top, 0.5):.2f}" fill="{color}" fill-opacity="0.25"/>')
            out.append(f'<line x1="{bx:.2f}" y1="{y(b["median"]):.2f}" x2="{bx + box_w:.2f}" '
                       f'y2="{y(b["median"]):.2f}" stroke-width="2"/>')
            for o in b["outliers"]:
                out.append(f'<circle cx="{mid:.2f}" cy="{y(o):.2f}" r="2" fill="none"/>')
            out.append('</g>')
        star = "(*)" if r.significant else ""
        note = "n/a" if r.sts is None else _num(r.sts)
        out.append(f'<text class="sts" x="{cx:.2f}" y="{MARGIN_TOP - 8}" text-anchor="middle">{note}{star}</text>')
        out.append(f'<text x="{cx:.2f}" y="{MARGIN_TOP + plot_h + 18}" text-anchor="middle">'
                   f'{escape(_label(r, i))}</text>')
        out.append('</g>')
    legend_y = HEIGHT - 12
    out.append(f'<rect x="{MARGIN_LEFT}" y="{legend_y - 9}" width="10" height="10" fill="{REF_COLOR}"/>')
    out.append(f'<text x="{MARGIN_LEFT + 14}" y="{legend_y}">reference</text>')
    out.append(f'<rect x="{MARGIN_LEFT + 90}" y="{legend_y - 9}" width="10" height="10" fill="{EXP_COLOR}"/>')
    out.append(f'<text x="{MARGIN_LEFT + 104}" y="{legend_y}">explanation student</text>')
    out.append('</svg>')
    return "\n".join(out) + "\n"
