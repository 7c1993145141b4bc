"""
Trajectory files: CSV (17 significant digits, round-trips bit-exactly),
a JSON provenance sidecar, and standalone SVG plots drawn with matplotlib.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from patternflow.core.errors import InvalidInputError, OutputFileError
from patternflow.models.models import FlowMode, Trajectory
from patternflow.utils import atomic_write_text

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SUMMARY_FILE = "summary.json"

# Plot style
FIGSIZE = (7.2, 4.4)
SVG_STYLE = {
    "svg.hashsalt": "patternflow",  # stable element ids
    "svg.fonttype": "none",  # keep text as <text>
    "path.simplify": False,  # one vertex per sample
    "axes.linewidth": 0.5,
    "font.size": 10,
}


def _fmt(value: float) -> str:
    return "%.17g" % value


def render_csv(trajectory: Trajectory) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(trajectory.columns())
    for sample in trajectory:
        writer.writerow([_fmt(sample.t), _fmt(sample.acc), _fmt(sample.dacc)] + [_fmt(p) for p in sample.probs])
    return buffer.getvalue()


def emit_csv(trajectory: Trajectory, path: PathLike) -> Path:
    """Header ``t,acc,dacc,pi_1..pi_K`` then one row per sample."""
    written = atomic_write_text(path, render_csv(trajectory))
    logger.info("Wrote %d samples to %s", len(trajectory), written)
    return written


def read_csv(
    path: PathLike,
    mode: FlowMode = FlowMode.RLVR_FLOW,
    scenario_digest: str = "",
    converged: bool = False,
) -> Trajectory:
    """Inverse of emit_csv. The CSV carries no run metadata, so ``converged`` comes from the caller."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OutputFileError(f"Cannot read trajectory file {path}: {e}", path=path) from e

    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidInputError(f"{path} has no header row")
    header = rows[0]
    k = len(header) - 3
    expected = ["t", "acc", "dacc"] + [f"pi_{i + 1}" for i in range(k)]
    if k < 1 or header != expected:
        raise InvalidInputError(f"{path} does not have a trajectory header")
    if len(rows) == 1:
        return Trajectory.empty(k, mode, scenario_digest)

    try:
        data = np.array([[float(cell) for cell in row] for row in rows[1:]], dtype=float)
    except ValueError as e:
        raise InvalidInputError(f"{path} contains a non-numeric cell: {e}") from e
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InvalidInputError(f"{path} has rows of inconsistent width")
    return Trajectory(
        t=data[:, 0].copy(),
        probs=data[:, 3:].copy(),
        acc=data[:, 1].copy(),
        dacc=data[:, 2].copy(),
        mode=FlowMode(mode),
        scenario_digest=scenario_digest,
        converged=converged,
    )


def write_summary(directory: PathLike, payload: dict) -> Path:
    path = Path(directory) / SUMMARY_FILE
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_summary(directory: PathLike) -> Optional[dict]:
    path = Path(directory) / SUMMARY_FILE
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise OutputFileError(f"Cannot read {path}: {e}", path=path) from e


def render_svg(trajectory: Trajectory, series: Sequence[str], title: Optional[str] = None) -> str:
    """
    Line chart of ``series`` against t. Each line sits in an SVG group whose
    id is the series name; identical inputs give identical bytes.
    """
    if not series:
        raise InvalidInputError("at least one series is needed for a plot")
    if len(trajectory) == 0:
        raise InvalidInputError("cannot plot an empty trajectory")
    columns = {name: trajectory.column(name) for name in series}
    marker = "o" if len(trajectory) == 1 else None

    with matplotlib.rc_context(SVG_STYLE):
        fig = Figure(figsize=FIGSIZE)
        ax = fig.add_subplot()
        for name, values in columns.items():
            (line,) = ax.plot(trajectory.t, values, label=name, linewidth=1.5, marker=marker)
            line.set_gid(name)
        ax.set_title(title or f"{trajectory.mode.value} trajectory")
        ax.set_xlabel("t")
        ax.set_ylabel(", ".join(series))
        ax.spines[["top", "right"]].set_visible(False)
        ax.legend(loc="center left", bbox_to_anchor=(1.02, 0.5), frameon=False)
        fig.subplots_adjust(left=0.1, right=0.78, top=0.9, bottom=0.12)

        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def emit_svg(trajectory: Trajectory, series: Sequence[str], path: PathLike, title: Optional[str] = None) -> Path:
    """Write the chart of ``series`` to ``path``."""
    written = atomic_write_text(path, render_svg(trajectory, series, title))
    logger.info("Wrote plot of %s to %s", ", ".join(series), written)
    return written
