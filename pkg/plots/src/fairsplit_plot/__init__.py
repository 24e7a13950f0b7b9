"""Scatter plots of per-dataset loss ratios from fairsplit reports.

Each input report.json contributes one point; the axes are the ratio of a
method's cross-validated loss to the blind baseline's, drawn on log-scaled
axes with reference lines at ratio 1 and the diagonal.
"""

__version__ = "0.1.0"

from .render import (
    COMPARISON_COUPLED_VS_DECOUPLED,
    COMPARISON_TRANSFER_VS_PLAIN,
    PlotPoint,
    ReportFormatError,
    load_plot_points,
    render_ratio_scatter,
)

__all__ = [
    "__version__",
    "COMPARISON_COUPLED_VS_DECOUPLED",
    "COMPARISON_TRANSFER_VS_PLAIN",
    "PlotPoint",
    "ReportFormatError",
    "load_plot_points",
    "render_ratio_scatter",
]
