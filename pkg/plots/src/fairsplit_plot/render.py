"""Render log-ratio scatter plots from report.json files.

Comparisons:

* ``coupled_vs_decoupled``: x = coupled/blind, y = decoupled/blind loss
  ratio.  Points left of the vertical line mean the sensitive attribute
  helped; points below the diagonal mean decoupling beat the single
  coupled model.
* ``transfer_vs_plain``: x = decoupled(theta=0)/blind,
  y = decoupled_transfer/blind.  Points below the diagonal mean transfer
  learning improved on plain decoupling.

Every report is validated against the shipped JSON schema before use;
rendering is a pure function of report content (fixed hash salt, no
timestamps), so identical inputs produce identical SVG text.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from importlib import resources

import jsonschema
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

COMPARISON_COUPLED_VS_DECOUPLED = "coupled_vs_decoupled"
COMPARISON_TRANSFER_VS_PLAIN = "transfer_vs_plain"
COMPARISONS = (COMPARISON_COUPLED_VS_DECOUPLED, COMPARISON_TRANSFER_VS_PLAIN)

_AXES = {
    COMPARISON_COUPLED_VS_DECOUPLED: ("coupled", "decoupled"),
    COMPARISON_TRANSFER_VS_PLAIN: ("decoupled", "decoupled_transfer"),
}

SVG_HASH_SALT = "fairsplit-plot"


class ReportFormatError(Exception):
    """A report failed schema validation or lacks the needed aggregates."""


@dataclass(frozen=True)
class PlotPoint:
    """One dataset: x and y are log-ratios of method loss vs blind loss."""

    dataset_id: str
    x: float
    y: float


def _schema() -> dict:
    text = resources.files("fairsplit_plot").joinpath("schemas/report.schema.json").read_text("utf-8")
    return json.loads(text)


def _load_report(path: str, schema: dict) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ReportFormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        jsonschema.validate(report, schema)
    except jsonschema.ValidationError as exc:
        key = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ReportFormatError(f"{path}: schema violation at {key}: {exc.message}") from exc
    return report


def _mean_loss(report: dict, path: str, baseline: str) -> float:
    agg = report["aggregates"].get(baseline)
    if agg is None:
        raise ReportFormatError(f"{path}: aggregates/{baseline} missing")
    value = agg.get("mean_loss")
    if value is None or value <= 0:
        raise ReportFormatError(
            f"{path}: aggregates/{baseline}/mean_loss must be positive for ratio plots, got {value}"
        )
    return float(value)


def load_plot_points(report_paths, comparison: str) -> list[PlotPoint]:
    """One point per report: log-ratios of the comparison baselines vs blind."""
    if comparison not in COMPARISONS:
        raise ValueError(f"unknown comparison {comparison!r}; expected one of {COMPARISONS}")
    schema = _schema()
    x_base, y_base = _AXES[comparison]
    points = []
    for path in report_paths:
        report = _load_report(path, schema)
        blind = _mean_loss(report, path, "blind")
        x = math.log(_mean_loss(report, path, x_base) / blind)
        y = math.log(_mean_loss(report, path, y_base) / blind)
        dataset_id = os.path.basename(str(report["dataset"].get("path", path)))
        points.append(PlotPoint(dataset_id=dataset_id, x=x, y=y))
    if not points:
        raise ReportFormatError("no reports given")
    return points


def render_ratio_scatter(report_paths, comparison: str, out_path, axis_scale: str = "log") -> list[str]:
    """Render the scatter to SVG and PNG; returns the written paths.

    ``out_path`` may end in .svg or .png; both files are always written.
    Reference lines: ratio 1 on both axes and the diagonal x = y.
    """
    if axis_scale not in ("log", "linear"):
        raise ValueError("axis_scale must be 'log' or 'linear'")
    points = load_plot_points(report_paths, comparison)
    x_base, y_base = _AXES[comparison]
    ratios_x = [math.exp(p.x) for p in points]
    ratios_y = [math.exp(p.y) for p in points]

    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig, ax = plt.subplots(figsize=(5.0, 5.0))
        span = [0.5, 2.0] + ratios_x + ratios_y
        lo = min(span) * 0.8
        hi = max(span) * 1.25
        diag = ax.plot([lo, hi], [lo, hi], color="0.6", lw=0.8, zorder=1)[0]
        diag.set_gid("ref-diagonal")
        vline = ax.axvline(1.0, color="0.3", lw=0.8, zorder=1)
        vline.set_gid("ref-vertical")
        hline = ax.axhline(1.0, color="0.3", lw=0.8, zorder=1)
        hline.set_gid("ref-horizontal")
        scatter = ax.scatter(ratios_x, ratios_y, s=24, color="tab:blue", zorder=2)
        scatter.set_gid("ratio-points")
        if axis_scale == "log":
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
        ax.set_xlabel(f"{x_base} / blind loss ratio")
        ax.set_ylabel(f"{y_base} / blind loss ratio")
        ax.set_title(f"{comparison} ({len(points)} datasets)")

        root, ext = os.path.splitext(str(out_path))
        svg_path = root + ".svg"
        png_path = root + ".png"
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        fig.savefig(png_path, format="png", dpi=150)
        plt.close(fig)
    return [svg_path, png_path]
