"""
Plot data for convergence tables: gnuplot columns plus an SVG line chart
"""
import logging
from pathlib import Path
from typing import List, Sequence, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from core.errors import ContractViolation

logger = logging.getLogger(__name__)


def is_decreasing(values: Sequence[float]) -> bool:
    values = np.asarray(values, dtype=float)
    return bool(values.size < 2 or np.all(np.diff(values) < 0))


def emit_plot_data(table: pd.DataFrame, x: str, ys: Sequence[str], target: Union[str, Path],
                   title: str = "") -> List[Path]:
    """Write <target>.dat (x then ys, whitespace separated) and, for a non-empty table, <target>.svg"""
    for column in [x, *ys]:
        if column not in table.columns:
            raise ContractViolation(f"plot column '{column}' not in table", details={"columns": list(table.columns)})
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    dat_path = target.with_suffix(".dat")
    written = [dat_path]

    with dat_path.open("w", encoding="utf-8") as fh:
        fh.write("# " + " ".join([x, *ys]) + "\n")
        for row in table[[x, *ys]].itertuples(index=False):
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")

    if table.empty:
        logger.warning(f"Empty table: wrote {dat_path} without a chart")
        return written

    fig, ax = plt.subplots(figsize=(8, 5))
    notes = []
    for column in ys:
        ax.plot(table[x], table[column], marker='o', linewidth=2, markersize=6, label=column)
        notes.append(f"{column}: {'decreasing' if is_decreasing(table[column]) else 'not monotone'}")
    ax.set_xlabel(x)
    ax.set_ylabel("median")
    ax.set_title(title or target.stem)
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.annotate("\n".join(notes), xy=(0.02, 0.02), xycoords="axes fraction", fontsize=8)
    svg_path = target.with_suffix(".svg")
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    written.append(svg_path)
    logger.info(f"Plot data saved to {dat_path} and {svg_path}")
    return written
