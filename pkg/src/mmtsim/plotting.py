"""
Figures for experiment tables: a gnuplot script reading the CSV, and a
matplotlib rendering of the same plot to PNG.
"""

from __future__ import annotations

import numpy as np

from .experiments import Table

__all__ = ["gnuplot_script", "render_png"]

_LOG_X = {"fdts"}


def _numeric(vals) -> np.ndarray:
    return np.asarray([float(v) for v in vals], dtype=float)


def gnuplot_script(table: Table, csv_name: str, png_name: str) -> str:
    """gnuplot commands that plot ``csv_name`` into ``png_name``."""
    col = {name: i + 1 for i, name in enumerate(table.header)}
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{png_name}'",
        f"set xlabel '{table.x}'",
        f"set ylabel '{table.ylabel}'",
        "set grid",
    ]
    if table.x in _LOG_X:
        lines.append("set logscale x")
    if table.style == "map":
        y = table.y[0]
        lines += [
            "set view map",
            "set cblabel 'chosen mode'",
            f"plot '{csv_name}' using {col[table.x]}:{col[y]}:{col['chosen_mode']} with points pt 5 ps 2 palette notitle",
        ]
    else:
        parts = [f"'{csv_name}' using {col[table.x]}:{col[c]} with lines lw 2" for c in table.y]
        parts += [f"'{csv_name}' using {col[table.x]}:{col[c]} with points pt 7" for c in table.y_points]
        lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


def render_png(table: Table, path: str) -> None:
    """Draw the table with matplotlib (Agg backend) and save it to ``path``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.5, 5.0))
    try:
        x = _numeric(table.column(table.x))
        if table.style == "map":
            y = _numeric(table.column(table.y[0]))
            c = np.asarray(table.column("chosen_mode"), dtype=int)
            xs, ys = np.unique(x), np.unique(y)
            img = np.full((ys.size, xs.size), np.nan)
            img[np.searchsorted(ys, y), np.searchsorted(xs, x)] = c
            mesh = ax.pcolormesh(xs, ys, img, shading="nearest", cmap="viridis",
                                 vmin=1, vmax=max(int(c.max()), 2))
            fig.colorbar(mesh, ax=ax, label="chosen mode", ticks=range(1, int(c.max()) + 1))
        else:
            for name in table.y:
                ax.plot(x, _numeric(table.column(name)), "-", lw=1.8, label=name)
            ax.set_prop_cycle(None)
            for name in table.y_points:
                ax.plot(x, _numeric(table.column(name)), "o", ms=4, label=name)
            ax.legend(fontsize=8)
        if table.x in _LOG_X and np.all(x > 0):
            ax.set_xscale("log")
        ax.set_xlabel(table.x)
        ax.set_ylabel(table.ylabel)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)
