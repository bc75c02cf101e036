"""Experiment reports and file emission (CSV, SVG, JSON summary).

Everything written here is byte-deterministic for a fixed report: floats are
rendered with repr (shortest round-trip), dict orders are fixed, and the SVG
plots are emitted by a small built-in writer rather than a plotting library.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "FitResult",
    "Check",
    "ExperimentReport",
    "fit_exponential_rate",
    "fit_power_law",
    "emit_outputs",
    "write_csv",
    "svg_line_plot",
]

RESIDUAL_LIMIT = 0.2


@dataclass
class FitResult:
    """A fitted rate or exponent with its relative residual.

    A fit whose relative residual exceeds RESIDUAL_LIMIT is 'inconclusive'
    regardless of the fitted value; it can never back a passing check.
    """

    name: str
    value: float
    residual: float

    @property
    def conclusive(self) -> bool:
        return self.residual <= RESIDUAL_LIMIT


@dataclass
class Check:
    name: str
    passed: bool
    observed: float
    threshold: float
    comparison: str = "<="
    inconclusive: bool = False

    @property
    def status(self) -> str:
        if self.inconclusive:
            return "inconclusive"
        return "pass" if self.passed else "fail"


@dataclass
class ExperimentReport:
    experiment: str
    seed: int
    rows: list = field(default_factory=list)  # per-sweep-point dicts
    fits: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.status == "pass" for c in self.checks)

    def add_check(self, name, passed, observed, threshold, comparison="<=",
                  fit: Optional[FitResult] = None):
        inconclusive = fit is not None and not fit.conclusive
        self.checks.append(Check(name, bool(passed) and not inconclusive,
                                 float(observed), float(threshold), comparison,
                                 inconclusive=inconclusive))

    def summary_lines(self):
        for c in self.checks:
            yield (f"[{c.status.upper():>12s}] {self.experiment}: {c.name} "
                   f"(observed {c.observed:.6g} {c.comparison} {c.threshold:.6g})")


def _lstsq_line(x: np.ndarray, y: np.ndarray):
    """Least-squares line y ~ a + b x; returns (a, b, relative residual)."""
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    denom = float(np.linalg.norm(y - y.mean())) or 1.0
    res = float(np.linalg.norm(y - pred)) / denom
    return float(coef[0]), float(coef[1]), res


def fit_exponential_rate(times, values, name="rate", floor=1e-300) -> FitResult:
    """Fit values ~ C exp(-rate t); returns the positive-decay rate."""
    t = np.asarray(times, dtype=float)
    v = np.maximum(np.asarray(values, dtype=float), floor)
    _, slope, res = _lstsq_line(t, np.log(v))
    return FitResult(name=name, value=-slope, residual=res)


def fit_power_law(params, values, name="exponent", floor=1e-300) -> FitResult:
    """Fit values ~ C param^exponent in log-log."""
    p = np.log(np.asarray(params, dtype=float))
    v = np.log(np.maximum(np.asarray(values, dtype=float), floor))
    _, slope, res = _lstsq_line(p, v)
    return FitResult(name=name, value=slope, residual=res)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, rows, header=None) -> None:
    """RFC-4180 CSV with deterministic float formatting."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(",".join(header) + "\r\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\r\n")


def _ticks(lo: float, hi: float, log: bool):
    if log:
        lo_e = math.floor(math.log10(lo))
        hi_e = math.ceil(math.log10(hi))
        return [10.0 ** e for e in range(lo_e, hi_e + 1)]
    span = hi - lo or 1.0
    step = 10.0 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * span:
        out.append(t)
        t += step
    return out


def svg_line_plot(path, series: dict, xlabel: str = "", ylabel: str = "",
                  title: str = "", logx: bool = False, logy: bool = False) -> None:
    """Minimal SVG 1.1 line plot; ``series`` maps labels to (x, y) pairs."""
    W, H = 640, 440
    ml, mr, mt, mb = 70, 20, 36, 50
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    if logx:
        xs = xs[xs > 0]
    if logy:
        ys = ys[ys > 0]
    if xs.size == 0 or ys.size == 0:
        xs, ys = np.array([1.0]), np.array([1.0])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 1, y_hi + 1

    def sx(x):
        if logx:
            t = (math.log10(x) - math.log10(x_lo)) / (math.log10(x_hi) - math.log10(x_lo))
        else:
            t = (x - x_lo) / (x_hi - x_lo)
        return ml + t * (W - ml - mr)

    def sy(y):
        if logy:
            t = (math.log10(y) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
        else:
            t = (y - y_lo) / (y_hi - y_lo)
        return H - mb - t * (H - mt - mb)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{ml}" y="{mt}" width="{W-ml-mr}" height="{H-mt-mb}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x_lo, x_hi, logx):
        if t < x_lo or t > x_hi:
            continue
        px = sx(t)
        parts.append(f'<line x1="{px:.2f}" y1="{H-mb}" x2="{px:.2f}" y2="{H-mb+5}" stroke="black"/>')
        parts.append(f'<text x="{px:.2f}" y="{H-mb+18}" text-anchor="middle" font-size="10">{t:g}</text>')
    for t in _ticks(y_lo, y_hi, logy):
        if t < y_lo or t > y_hi:
            continue
        py = sy(t)
        parts.append(f'<line x1="{ml-5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="black"/>')
        parts.append(f'<text x="{ml-8}" y="{py+3:.2f}" text-anchor="end" font-size="10">{t:g}</text>')
    parts.append(f'<text x="{(ml+W-mr)/2:.1f}" y="{H-12}" text-anchor="middle" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="16" y="{(mt+H-mb)/2:.1f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 16 {(mt+H-mb)/2:.1f})">{ylabel}</text>')
    for i, (label, (x, y)) in enumerate(series.items()):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.ones(x.shape, dtype=bool)
        if logx:
            keep &= x > 0
        if logy:
            keep &= y > 0
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[keep], y[keep]))
        color = colors[i % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in zip(x[keep], y[keep]):
            parts.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="{color}"/>')
        parts.append(f'<text x="{W-mr-8}" y="{mt+16+14*i}" text-anchor="end" '
                     f'font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def emit_outputs(report: ExperimentReport, outdir, plots: Optional[dict] = None) -> list:
    """Write sweep CSV, checks CSV, machine-readable JSON, and SVG plots.

    ``plots`` maps file stems to svg_line_plot keyword dicts.  Returns the
    list of created paths.
    """
    os.makedirs(outdir, exist_ok=True)
    created = []
    stem = report.experiment

    if report.rows:
        header = list(report.rows[0].keys())
        rows = [[row.get(k, "") for k in header] for row in report.rows]
        path = os.path.join(outdir, f"{stem}_sweep.csv")
        write_csv(path, rows, header=header)
        created.append(path)

    path = os.path.join(outdir, f"{stem}_summary.csv")
    write_csv(path, [
        (c.name, c.status, c.observed, c.comparison, c.threshold) for c in report.checks
    ], header=["check", "status", "observed", "comparison", "threshold"])
    created.append(path)

    payload = {
        "experiment": report.experiment,
        "seed": report.seed,
        "passed": report.passed,
        "checks": [
            {"name": c.name, "status": c.status, "observed": c.observed,
             "comparison": c.comparison, "threshold": c.threshold}
            for c in report.checks
        ],
        "fits": [
            {"name": f.name, "value": f.value, "residual": f.residual,
             "conclusive": f.conclusive}
            for f in report.fits
        ],
    }
    path = os.path.join(outdir, f"{stem}_report.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    created.append(path)

    for plot_stem, kwargs in (plots or {}).items():
        path = os.path.join(outdir, f"{plot_stem}.svg")
        svg_line_plot(path, **kwargs)
        created.append(path)
    return created
