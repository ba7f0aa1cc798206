"""SVG line plots from long-format series CSVs (``series,x,y[,lo,hi]``)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["PlotSpec", "PlotSchemaError", "read_series_csv", "emit_plot"]

REQUIRED = ("series", "x", "y")
OPTIONAL = ("lo", "hi")


class PlotSchemaError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row, self.column = row, column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class PlotSpec:
    title: str = ""
    xlabel: str = "evaluations"
    ylabel: str = "fraction in ball"
    fraction: bool = True  # clamp the y axis to [0, 1]
    hline: float | None = None


def read_series_csv(path) -> dict[str, dict[str, list[float]]]:
    """Parse a series CSV into ``{name: {"x": [...], "y": [...], "lo": [...], "hi": [...]}}``."""
    out: dict[str, dict[str, list[float]]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in REQUIRED:
            if col not in header:
                raise PlotSchemaError("missing required column", row=1, column=col)
        has_band = all(c in header for c in OPTIONAL)
        # header is row 1
        for rowno, row in enumerate(reader, start=2):
            name = row["series"]
            if not name:
                raise PlotSchemaError("empty series name", rowno, "series")
            entry = out.setdefault(name, {"x": [], "y": [], "lo": [], "hi": []})
            cols = ("x", "y") + (OPTIONAL if has_band else ())
            for col in cols:
                raw = row.get(col)
                try:
                    val = float(raw)
                except (TypeError, ValueError):
                    raise PlotSchemaError(f"not a number: {raw!r}", rowno, col) from None
                if math.isnan(val) and col in ("x", "y"):
                    raise PlotSchemaError("NaN value", rowno, col)
                entry[col].append(val)
    return out


def emit_plot(csv_path, out_path, spec: PlotSpec | None = None) -> Path:
    """Render the series in ``csv_path`` as an SVG at ``out_path``."""
    spec = spec or PlotSpec()
    data = read_series_csv(csv_path)
    # real <text> elements and a fixed id salt keep the SVG self-contained and reproducible
    with plt.rc_context({"svg.fonttype": "none", "svg.hashsalt": "dyntrack"}):
        return _render(data, Path(out_path), spec)


def _render(data, out: Path, spec: PlotSpec) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    try:
        if not data:
            ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)
        for name, s in data.items():
            (line,) = ax.plot(s["x"], s["y"], label=name, lw=1.2)
            if s["lo"]:
                ax.fill_between(s["x"], s["lo"], s["hi"], color=line.get_color(), alpha=0.2, lw=0)
        if spec.hline is not None:
            ax.axhline(spec.hline, color="k", ls="--", lw=0.8, label=f"y = {spec.hline:g}")
        ax.set_xlabel(spec.xlabel)
        ax.set_ylabel(spec.ylabel)
        if spec.title:
            ax.set_title(spec.title)
        if data or spec.hline is not None:
            ax.legend(loc="best", fontsize="small")
        if spec.fraction:
            ax.set_ylim(0.0, 1.0)
        out.parent.mkdir(parents=True, exist_ok=True)
        # fixed metadata keeps the SVG reproducible
        fig.savefig(out, format="svg", metadata={"Date": None}, bbox_inches="tight")
    finally:
        plt.close(fig)
    return out
