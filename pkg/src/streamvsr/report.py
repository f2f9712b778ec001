"""Delimited report files and the figures rendered alongside them.

Every report path in the CLI writes a CSV (comma-delimited, one header row)
and, next to it, PNG figures rendered with the Agg backend.  Both are
bit-reproducible for identical inputs: floats are serialized with ``repr``
(shortest round-trip form) and the PNG encoder is stripped of its software
metadata chunk.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError

__all__ = [
    "write_csv",
    "read_csv",
    "file_sha256",
    "save_line_plot",
    "save_bar_chart",
    "save_profile_image",
    "save_loss_curves",
]

_FIG_KW = {"figsize": (6.4, 4.0), "dpi": 110}
_SAVE_KW = {"metadata": {"Software": None}}


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a comma-delimited table; returns the path written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            if len(row) != len(header):
                raise DataError(
                    f"row of {len(row)} cells does not match {len(header)} columns"
                )
            writer.writerow([_format_cell(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read a delimited report back as (header, string rows)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no report at {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise DataError(f"empty report at {path}")
    return rows[0], rows[1:]


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def save_line_plot(
    path: str | Path,
    x: Sequence[float],
    series: Mapping[str, Sequence[float]],
    xlabel: str,
    ylabel: str,
    title: str = "",
    fit: tuple[float, float] | None = None,
) -> Path:
    """One or more y-series against a shared x axis; optional linear fit overlay."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(**_FIG_KW)
    for label, ys in series.items():
        ax.plot(list(x), list(ys), marker="o", label=label)
    if fit is not None:
        slope, intercept = fit
        xs = np.asarray(list(x), dtype=float)
        ax.plot(xs, slope * xs + intercept, linestyle="--", label="linear fit")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1 or fit is not None:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_bar_chart(
    path: str | Path,
    labels: Sequence[str],
    groups: Mapping[str, Sequence[float]],
    ylabel: str,
    title: str = "",
) -> Path:
    """Grouped bars: one bar per label within each named group."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(**_FIG_KW)
    n_groups = len(groups)
    xs = np.arange(len(labels), dtype=float)
    width = 0.8 / max(n_groups, 1)
    for idx, (name, values) in enumerate(groups.items()):
        offset = (idx - (n_groups - 1) / 2.0) * width
        ax.bar(xs + offset, list(values), width=width, label=name)
    ax.set_xticks(xs)
    ax.set_xticklabels(list(labels), rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if n_groups > 1:
        ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_profile_image(path: str | Path, profile: np.ndarray, title: str = "") -> Path:
    """Render a temporal profile (3, T, W) as an image: rows are frames."""
    profile = np.asarray(profile)
    if profile.ndim != 3 or profile.shape[0] != 3:
        raise DataError(f"profile must be (3, T, W), got {profile.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.clip(np.moveaxis(profile, 0, 2), 0.0, 1.0)
    fig, ax = plt.subplots(**_FIG_KW)
    ax.imshow(img, aspect="auto", interpolation="nearest")
    ax.set_xlabel("column")
    ax.set_ylabel("frame")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_loss_curves(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[float]]) -> Path:
    """Plot loss-CSV columns (first column is the step axis) on a log-friendly scale."""
    if not rows:
        raise DataError("no loss rows to plot")
    cols = list(zip(*rows))
    steps = [float(v) for v in cols[0]]
    series = {}
    for name, values in zip(header[1:], cols[1:]):
        vals = [float(v) for v in values]
        if any(v != 0.0 for v in vals):
            series[name] = vals
    return save_line_plot(path, steps, series, xlabel=header[0], ylabel="loss")
