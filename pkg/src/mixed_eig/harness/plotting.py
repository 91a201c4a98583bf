"""Single-panel SVG line plots.

Uses the object-oriented matplotlib API (no pyplot state) with a fixed
hash salt and no date metadata, so identical data gives identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .report import PlotSpec


def render_line_plot(spec: PlotSpec, path: str | Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "mixed-eig", "svg.fonttype": "none"}):
        fig = Figure(figsize=(5.0, 3.4))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot()
        ax.plot(spec.x, spec.y, marker="o", markersize=3, linewidth=1.2, color="#1f4e79")
        if spec.logy:
            ax.set_yscale("log")
        ax.set_xlabel(spec.xlabel)
        ax.set_ylabel(spec.ylabel)
        ax.set_title(spec.title, fontsize=10)
        ax.grid(True, linewidth=0.4, alpha=0.5)
        for side in ("top", "right"):
            ax.spines[side].set_visible(False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
