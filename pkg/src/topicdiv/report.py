"""Regression tables (CSV and fixed-width text) and SVG figures."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence, Union
from xml.sax.saxutils import escape

import numpy as np

from .diversity import AnnualBoxStats
from .estimators.fe import CONSTANT, RegressionResult
from .estimators.iv import TslsResult
from .estimators.placebo import PlaceboDistribution

__version__ = "0.1.0"

Result = Union[RegressionResult, TslsResult]

CSV_FIELDS = ["model", "outcome", "term", "estimate", "cluster_se", "p_value", "stars", "n_obs", "adjusted_r2"]
FE_LABELS = {"firm_id": "Firm FE", "year": "Year FE"}


def stars(p: float) -> str:
    """``***`` below 1%, ``**`` below 5%, ``*`` below 10%."""
    if not np.isfinite(p):
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.10 else ""


def _second(result: Result) -> RegressionResult:
    return result.second_stage if isinstance(result, TslsResult) else result


def _terms(results: Sequence[Result]) -> list[str]:
    terms: list[str] = []
    for r in results:
        for name in _second(r).names:
            if name != CONSTANT and name not in terms:
                terms.append(name)
    if any(CONSTANT in _second(r).names for r in results):
        terms.append(CONSTANT)
    return terms


def _as_list(results) -> list[Result]:
    if results is None:
        return []
    if isinstance(results, (RegressionResult, TslsResult)):
        return [results]
    return list(results)


def table_csv(results, labels: Sequence[str] | None = None) -> str:
    """One row per (model, coefficient); header only when there is nothing to report."""
    results = _as_list(results)
    labels = list(labels) if labels else [f"({i + 1})" for i in range(len(results))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for label, r in zip(labels, results):
        reg = _second(r)
        pv = reg.pvalues
        for j, name in enumerate(reg.names):
            w.writerow([label, reg.outcome, name, repr(float(reg.coef[j])), repr(float(reg.se[j])),
                        repr(float(pv[j])), stars(pv[j]), reg.n_obs, repr(float(reg.adjusted_r2))])
    return buf.getvalue()


def _fmt(x: float, digits: int = 4) -> str:
    if not np.isfinite(x):
        return ""
    s = f"{x:.{digits}f}"
    return "0." + "0" * digits if s == "-0." + "0" * digits else s


def table_text(results, labels: Sequence[str] | None = None, digits: int = 4) -> str:
    """Fixed-width table: coefficient with stars, SE in parentheses beneath.

    Followed by fixed-effect indicator rows, Observations and Adjusted R².
    2SLS columns also get KP rk LM (with p-value) and KP rk Wald F rows.
    """
    results = _as_list(results)
    labels = list(labels) if labels else [f"({i + 1})" for i in range(len(results))]
    terms = _terms(results)
    head = [""] + labels
    sub = [""] + [_second(r).outcome for r in results]
    body: list[list[str]] = []
    for term in terms:
        coef_row, se_row = [term], [""]
        for r in results:
            reg = _second(r)
            if term in reg.names:
                j = reg.names.index(term)
                coef_row.append(_fmt(reg.coef[j], digits) + stars(reg.pvalues[j]))
                se_row.append(f"({_fmt(reg.se[j], digits)})")
            else:
                coef_row.append("")
                se_row.append("")
        body += [coef_row, se_row]
    if results:
        dims: list[str] = []
        for r in results:
            dims += [d for d in _second(r).absorbed if d not in dims]
        for dim in dims:
            body.append([FE_LABELS.get(dim, f"{dim} FE")] + ["Yes" if dim in _second(r).absorbed else "No" for r in results])
        body.append(["Observations"] + [str(_second(r).n_obs) for r in results])
        body.append(["Adjusted R²"] + [_fmt(_second(r).adjusted_r2, digits) for r in results])
        if any(isinstance(r, TslsResult) for r in results):
            body.append(["KP rk LM"] + [
                f"{r.kp_lm:.3f} [{r.kp_lm_p:.3f}]" if isinstance(r, TslsResult) else "" for r in results])
            body.append(["KP rk Wald F"] + [
                f"{r.kp_wald_f:.3f}" if isinstance(r, TslsResult) else "" for r in results])
    rows = [head, sub] + body if results else [head]
    widths = [max(len(row[c]) for row in rows) for c in range(len(head))]
    lines = []
    for i, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [row[c].rjust(widths[c]) for c in range(1, len(row))]
        lines.append("  ".join(cells).rstrip())
        if i == (1 if results else 0):
            lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    return "\n".join(lines) + "\n"


def emit_table(results, out, style: str = "text", labels: Sequence[str] | None = None) -> Path:
    """Write one or more estimation results as ``csv`` or ``text``."""
    if style == "csv":
        content = table_csv(results, labels)
    elif style == "text":
        content = table_text(results, labels)
    else:
        raise ValueError(f"unknown table style {style!r}")
    out = Path(out)
    out.write_text(content, encoding="utf-8")
    return out


# --------------------------------------------------------------------------
# SVG


class _Axis:
    """Linear map from a data interval onto a pixel interval."""

    def __init__(self, lo: float, hi: float, p0: float, p1: float):
        if hi <= lo:
            pad = abs(lo) * 0.05 or 0.5
            lo, hi = lo - pad, hi + pad
        self.lo, self.hi, self.p0, self.p1 = lo, hi, p0, p1

    def __call__(self, v: float) -> float:
        return self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)

    def ticks(self, n: int = 5) -> list[float]:
        raw = (self.hi - self.lo) / n
        mag = 10 ** math.floor(math.log10(raw))
        step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
        start = math.ceil(self.lo / step) * step
        out = []
        v = start
        while v <= self.hi + 1e-12 * step:
            out.append(round(v, 12))
            v += step
        return out


def _n(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _svg(width: int, height: int, body: list[str], title: str) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- topicdiv {__version__} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" '
        'font-family="sans-serif" font-size="12">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _y_axis(ax: _Axis, x: float, label: str, right: bool = False) -> list[str]:
    side = 1 if right else -1
    anchor = "start" if right else "end"
    out = [f'<line class="axis" x1="{_n(x)}" y1="{_n(ax.p0)}" x2="{_n(x)}" y2="{_n(ax.p1)}" stroke="black"/>']
    for t in ax.ticks():
        y = ax(t)
        out.append(f'<line x1="{_n(x)}" y1="{_n(y)}" x2="{_n(x + 5 * side)}" y2="{_n(y)}" stroke="black"/>')
        out.append(f'<text x="{_n(x + 8 * side)}" y="{_n(y + 4)}" text-anchor="{anchor}">{_tick_label(t)}</text>')
    mid = (ax.p0 + ax.p1) / 2
    lx = x + 50 * side
    out.append(f'<text class="axis-label" x="{_n(lx)}" y="{_n(mid)}" text-anchor="middle" '
               f'transform="rotate(-90 {_n(lx)} {_n(mid)})">{escape(label)}</text>')
    return out


def boxplot_svg(stats: Sequence[AnnualBoxStats], ylabel: str = "Diversity", title: str = "Annual distribution") -> str:
    """Box per year with median line, whiskers and outlier dots."""
    stats = list(stats)
    if not stats:
        raise ValueError("boxplot needs at least one year of statistics")
    width, height = max(360, 80 + 60 * len(stats)), 360
    left, right, top, bottom = 70, width - 20, 30, height - 50
    lo = min(min(s.whisker_lo, *s.outliers) if s.outliers else s.whisker_lo for s in stats)
    hi = max(max(s.whisker_hi, *s.outliers) if s.outliers else s.whisker_hi for s in stats)
    pad = 0.05 * (hi - lo) if hi > lo else 0.05
    ay = _Axis(lo - pad, hi + pad, bottom, top)
    slot = (right - left) / len(stats)
    box_w = min(40.0, slot * 0.6)
    body = [f'<text x="{_n(width / 2)}" y="18" text-anchor="middle">{escape(title)}</text>']
    body += _y_axis(ay, left, ylabel)
    body.append(f'<line class="axis" x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>')
    for i, s in enumerate(stats):
        cx = left + slot * (i + 0.5)
        x0 = cx - box_w / 2
        g = [f'<g class="box" data-year="{s.year}">']
        g.append(f'<line class="whisker" x1="{_n(cx)}" y1="{_n(ay(s.whisker_lo))}" x2="{_n(cx)}" y2="{_n(ay(s.q1))}" stroke="black"/>')
        g.append(f'<line class="whisker" x1="{_n(cx)}" y1="{_n(ay(s.q3))}" x2="{_n(cx)}" y2="{_n(ay(s.whisker_hi))}" stroke="black"/>')
        for w in (s.whisker_lo, s.whisker_hi):
            g.append(f'<line class="cap" x1="{_n(cx - box_w / 4)}" y1="{_n(ay(w))}" x2="{_n(cx + box_w / 4)}" y2="{_n(ay(w))}" stroke="black"/>')
        g.append(f'<rect class="iqr" x="{_n(x0)}" y="{_n(ay(s.q3))}" width="{_n(box_w)}" '
                 f'height="{_n(ay(s.q1) - ay(s.q3))}" fill="#cfe0f3" stroke="black"/>')
        g.append(f'<line class="median" x1="{_n(x0)}" y1="{_n(ay(s.median))}" x2="{_n(x0 + box_w)}" y2="{_n(ay(s.median))}" stroke="black" stroke-width="2"/>')
        for o in s.outliers:
            g.append(f'<circle class="outlier" cx="{_n(cx)}" cy="{_n(ay(o))}" r="2.5" fill="none" stroke="black"/>')
        g.append(f'<text x="{_n(cx)}" y="{bottom + 18}" text-anchor="middle">{s.year}</text>')
        g.append("</g>")
        body += g
    body.append(f'<text class="axis-label" x="{_n((left + right) / 2)}" y="{height - 10}" text-anchor="middle">Year</text>')
    return _svg(width, height, body, title)


def density_svg(dist: PlaceboDistribution, title: str = "Placebo coefficients") -> str:
    """Placebo p-values as dots (left axis) and coefficient density (right axis).

    A solid vertical line marks the baseline estimate and a dashed
    horizontal line marks p = 0.10.
    """
    ok = dist.valid
    if not ok.any():
        raise ValueError("placebo distribution has no successful reps")
    coefs, pvals = dist.coefficients[ok], dist.p_values[ok]
    grid, dens = dist.kde_grid, dist.kde_density
    xs = np.concatenate([coefs, grid, [dist.baseline_coef]])
    width, height = 560, 360
    left, right, top, bottom = 70, width - 70, 30, height - 50
    span = float(xs.max() - xs.min())
    ax = _Axis(float(xs.min()) - 0.03 * span, float(xs.max()) + 0.03 * span, left, right)
    ap = _Axis(0.0, 1.0, bottom, top)
    ad = _Axis(0.0, float(dens.max()) * 1.05 if dens.size else 1.0, bottom, top)
    body = [f'<text x="{_n(width / 2)}" y="18" text-anchor="middle">{escape(title)}</text>']
    body += _y_axis(ap, left, "p-value")
    body += _y_axis(ad, right, "Density", right=True)
    body.append(f'<line class="axis" x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>')
    for t in ax.ticks():
        x = ax(t)
        body.append(f'<line x1="{_n(x)}" y1="{bottom}" x2="{_n(x)}" y2="{bottom + 5}" stroke="black"/>')
        body.append(f'<text x="{_n(x)}" y="{bottom + 18}" text-anchor="middle">{_tick_label(t)}</text>')
    body.append(f'<text class="axis-label" x="{_n((left + right) / 2)}" y="{height - 10}" text-anchor="middle">Coefficient</text>')
    body.append('<g class="pvalues">')
    for c, p in zip(coefs, pvals):
        body.append(f'<circle class="pvalue" cx="{_n(ax(c))}" cy="{_n(ap(p))}" r="2" fill="#4a72b0" fill-opacity="0.6"/>')
    body.append("</g>")
    if grid.size:
        pts = " ".join(f"{_n(ax(g))},{_n(ad(d))}" for g, d in zip(grid, dens))
        body.append(f'<polyline class="kde" points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    bx = ax(dist.baseline_coef)
    body.append(f'<line class="baseline" data-value="{dist.baseline_coef!r}" x1="{_n(bx)}" y1="{top}" x2="{_n(bx)}" '
                f'y2="{bottom}" stroke="#b03030" stroke-width="1.5"/>')
    py = ap(0.10)
    body.append(f'<line class="p010" x1="{left}" y1="{_n(py)}" x2="{right}" y2="{_n(py)}" stroke="#b03030" stroke-dasharray="6 4"/>')
    return _svg(width, height, body, title)


def emit_boxplot_svg(stats: Sequence[AnnualBoxStats], out, **kwargs) -> Path:
    out = Path(out)
    out.write_text(boxplot_svg(stats, **kwargs), encoding="utf-8")
    return out


def emit_density_svg(dist: PlaceboDistribution, out, **kwargs) -> Path:
    out = Path(out)
    out.write_text(density_svg(dist, **kwargs), encoding="utf-8")
    return out
