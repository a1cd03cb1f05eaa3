"""Static SVG plots and the markdown run report.

Plots are emitted as self-contained SVG (plain XML, no rendering
dependency).  The report embeds the validation summary numbers exactly as
they appear in the summary JSON.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from . import dubins
from .config import ExperimentConfig
from .pipeline import INDEX_CSV, REPORT_MD, RUNS_DIR, SUMMARY_JSON

_W, _H, _PAD = 640, 400, 50


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [(out_lo + (v - lo) / span * (out_hi - out_lo)) for v in vals]


def _polyline(xs, ys, color, width=1.5, dash=""):
    pts = " ".join("%.2f,%.2f" % (x, y) for x, y in zip(xs, ys))
    extra = ' stroke-dasharray="%s"' % dash if dash else ""
    return ('<polyline fill="none" stroke="%s" stroke-width="%s"%s points="%s"/>'
            % (color, width, extra, pts))


def svg_plot(series, path, title="", xlabel="", ylabel=""):
    """Write a minimal line plot; series is {label: (xs, ys, color, dash)}."""
    all_x = np.concatenate([np.asarray(s[0], dtype=float) for s in series.values()])
    all_y = np.concatenate([np.asarray(s[1], dtype=float) for s in series.values()])
    finite = np.isfinite(all_y)
    if not np.any(finite):
        all_y = np.array([0.0, 1.0])
    x_lo, x_hi = float(np.min(all_x)), float(np.max(all_x))
    y_lo = float(np.min(all_y[finite])) if np.any(finite) else 0.0
    y_hi = float(np.max(all_y[finite])) if np.any(finite) else 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    parts = ['<?xml version="1.0" encoding="UTF-8"?>',
             '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">' % (_W, _H),
             '<rect width="%d" height="%d" fill="white"/>' % (_W, _H),
             '<text x="%d" y="20" font-size="14" text-anchor="middle">%s</text>'
             % (_W // 2, title),
             '<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>'
             % (_PAD, _H - _PAD, _W - _PAD, _H - _PAD),
             '<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>'
             % (_PAD, _PAD, _PAD, _H - _PAD),
             '<text x="%d" y="%d" font-size="11" text-anchor="middle">%s</text>'
             % (_W // 2, _H - 12, xlabel),
             '<text x="14" y="%d" font-size="11" text-anchor="middle" '
             'transform="rotate(-90 14 %d)">%s</text>' % (_H // 2, _H // 2, ylabel),
             '<text x="%d" y="%d" font-size="9">%s / %s</text>'
             % (_PAD, _H - _PAD + 14, _fmt_tick(x_lo), _fmt_tick(x_hi)),
             '<text x="4" y="%d" font-size="9">%s</text>' % (_H - _PAD, _fmt_tick(y_lo)),
             '<text x="4" y="%d" font-size="9">%s</text>' % (_PAD + 4, _fmt_tick(y_hi))]
    legend_y = _PAD
    for label, (xs, ys, color, dash) in series.items():
        xs = np.asarray(xs, dtype=float); ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(ys)
        if not np.any(keep):
            continue
        px = _scale(xs[keep], x_lo, x_hi, _PAD, _W - _PAD)
        py = _scale(ys[keep], y_lo, y_hi, _H - _PAD, _PAD)
        parts.append(_polyline(px, py, color, dash=dash))
        parts.append('<text x="%d" y="%d" font-size="10" fill="%s">%s</text>'
                     % (_W - _PAD - 150, legend_y, color, label))
        legend_y += 14
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _fmt_tick(v):
    return "%.3g" % v


def write_report(cfg: ExperimentConfig, out_dir) -> dict:
    runs_dir = os.path.join(out_dir, RUNS_DIR)
    with open(os.path.join(out_dir, SUMMARY_JSON)) as fh:
        summary = json.load(fh)
    plots = []
    plot_dir = os.path.join(out_dir, "plots")
    entries = []
    with open(os.path.join(runs_dir, INDEX_CSV)) as fh:
        next(fh)
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) >= 3:
                entries.append(parts)
    if cfg.report.plots:
        os.makedirs(plot_dir, exist_ok=True)
        xy_series = {}
        palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
        for i, parts in enumerate(entries):
            data, meta = dubins.read_log_csv(os.path.join(runs_dir, parts[2]))
            if data["k"].size == 0:
                continue
            name = os.path.splitext(parts[2])[0]
            series = {"position error": (data["k"], data["pos_err"], "#1f77b4", ""),
                      "state bound": (data["k"], data["state_bound"], "#d62728", "6,3")}
            p = os.path.join(plot_dir, name + "_error.svg")
            svg_plot(series, p, title="tracking error vs bound (%s seed %s)"
                     % (meta.get("controller", "?"), meta.get("seed", "?")),
                     xlabel="step k", ylabel="position error")
            plots.append(p)
            if i < len(palette):
                xy_series["%s seed %s" % (meta.get("controller"), meta.get("seed"))] = (
                    data["x"], data["y"], palette[i % len(palette)], "")
        if xy_series:
            ref_t = np.linspace(0, 2 * math.pi, 100)
            r = cfg.rollout.radius
            xy_series["reference circle"] = (r * np.sin(ref_t), r * (1 - np.cos(ref_t)),
                                             "#000000", "2,2")
            p = os.path.join(plot_dir, "trajectories_xy.svg")
            svg_plot(xy_series, p, title="XY tracking", xlabel="x", ylabel="y")
            plots.append(p)

    lines = ["# Tracking study report", "",
             "Preset: `%s`  " % cfg.preset,
             "Runs: %d" % summary["runs"], "",
             "## Bound validation", "",
             "| bound | fraction within | target | pass |",
             "|---|---|---|---|"]
    for kind in sorted(summary["fraction_within_bound"]):
        frac = summary["fraction_within_bound"][kind]
        lines.append("| %s | %s | %s | %s |"
                     % (kind, repr(frac), repr(summary["targets"].get(kind)),
                        summary["pass_flags"].get(kind)))
    lines += ["", "## Held-out score coverage", "",
              "| score kind | coverage | target |", "|---|---|---|"]
    for kind in sorted(summary.get("coverage", {})):
        lines.append("| %s | %s | %s |"
                     % (kind, repr(summary["coverage"][kind]),
                        repr(summary["targets"].get("coverage:" + kind))))
    if plots:
        lines += ["", "## Plots", ""]
        lines += ["- `%s`" % os.path.relpath(p, out_dir) for p in plots]
    lines.append("")
    report_path = os.path.join(out_dir, REPORT_MD)
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines))
    return {"report": report_path, "plots": len(plots)}
