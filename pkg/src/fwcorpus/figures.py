"""Matplotlib figure rendering for the report paths.

Each renderer writes one PNG next to the CSV it visualizes and returns
the path. The Agg backend is forced so the CLI works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harden import TrendTable, UNKNOWN_YEAR
from .manifest import CompositionStats
from .soundness import Status

_STATUS_COLORS = {
    Status.FULL: "#2a9d5c",
    Status.PARTIAL: "#e9c46a",
    Status.NONE: "#d1495b",
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_histogram(
    histogram: dict[str, int], path: Path, title: str, xlabel: str
) -> Path:
    def key(item):
        return (item[0] == "unknown", item[0])

    items = sorted(histogram.items(), key=key)
    labels = [label for label, _ in items]
    counts = [count for _, count in items]
    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(labels)), 4))
    ax.bar(range(len(labels)), counts, color="#33658a")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("samples")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    return _save(fig, path)


def render_composition_figures(stats: CompositionStats, outdir: Path) -> list[Path]:
    paths = [
        render_histogram(
            stats.class_histogram,
            outdir / "device_classes.png",
            "Samples per device class",
            "device class",
        ),
        render_histogram(
            stats.year_histogram,
            outdir / "release_years.png",
            "Samples per release year",
            "release year",
        ),
    ]
    if stats.kernel_histogram:
        paths.append(
            render_histogram(
                stats.kernel_histogram,
                outdir / "kernel_versions.png",
                "Kernel banner findings per version",
                "kernel version",
            )
        )
    if stats.isa_histogram:
        paths.append(
            render_histogram(
                stats.isa_histogram,
                outdir / "isas.png",
                "Samples per detected ISA",
                "ISA",
            )
        )
    return paths


def render_status_fractions(
    aggregates: dict, path: Path, title: str
) -> Path:
    """Horizontal stacked bars of full/partial/none fractions per key."""
    keys = list(aggregates)
    labels = [k.value if hasattr(k, "value") else str(k) for k in keys]
    fig, ax = plt.subplots(figsize=(8, max(3, 0.4 * len(keys))))
    y = range(len(keys))
    left = [0.0] * len(keys)
    for status in (Status.FULL, Status.PARTIAL, Status.NONE):
        fractions = [aggregates[k].fraction(status) for k in keys]
        ax.barh(
            y,
            fractions,
            left=left,
            color=_STATUS_COLORS[status],
            label=status.value,
        )
        left = [l + f for l, f in zip(left, fractions)]
    ax.set_yticks(list(y))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0, 1)
    ax.set_xlabel("fraction of applicable data points")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def render_trend(trend: TrendTable, path: Path, title: str) -> Path:
    years = [y for y in trend.years() if y != UNKNOWN_YEAR]
    series = sorted({key for _, key in trend.rows})
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for key in series:
        points = [
            (year, trend.rows[(year, key)].fraction)
            for year in years
            if (year, key) in trend.rows
        ]
        if not points:
            continue
        ax.plot(
            [p[0] for p in points],
            [p[1] for p in points],
            marker="o",
            markersize=3,
            label=key,
        )
    ax.set_ylim(0, 1)
    ax.set_ylabel("fraction enabled")
    ax.set_xlabel("firmware release year")
    ax.tick_params(axis="x", rotation=45)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)
