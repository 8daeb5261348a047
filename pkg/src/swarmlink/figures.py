"""Matplotlib renderings of the report data, written next to the CSV/PGM
files. Everything draws through the Agg backend so runs stay headless and
repeatable."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .link import pair_label


def save(fig, path) -> None:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def fig_rssi_accuracy(rows_by_device, path) -> None:
    """Grouped bars of interval accuracy per device, one group per
    (distance, interval) row."""
    devices = sorted(rows_by_device)
    labels = [f"{row.distance:g}m {row.interval.label()}" for row in rows_by_device[devices[0]]]
    x = np.arange(len(labels))
    width = 0.8 / max(len(devices), 1)
    fig, ax = plt.subplots(figsize=(max(6, len(labels)), 4))
    for k, dev in enumerate(devices):
        acc = [100 * (r.accuracy or 0.0) for r in rows_by_device[dev]]
        ax.bar(x + k * width, acc, width, label=f"Device {dev}")
    ax.axhline(80, color="red", linestyle="--", linewidth=1, label="80% requirement")
    ax.set_xticks(x + width * (len(devices) - 1) / 2)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("accuracy [%]")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    fig.tight_layout()
    save(fig, path)


def fig_reconnect(mean_rows, path) -> None:
    """Mean reestablishment time per distance, one bar per pair."""
    pairs = sorted({r["pair"] for r in mean_rows})
    distances = sorted({r["distance_m"] for r in mean_rows})
    by = {(r["distance_m"], r["pair"]): r["mean_elapsed_s"] for r in mean_rows}
    x = np.arange(len(distances))
    width = 0.8 / max(len(pairs), 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, p in enumerate(pairs):
        vals = [by.get((d, p)) or 0.0 for d in distances]
        ax.bar(x + k * width, vals, width, label=pair_label(p))
    ax.set_xticks(x + width * (len(pairs) - 1) / 2)
    ax.set_xticklabels([f"{d:g} m" for d in distances])
    ax.set_ylabel("mean reestablishment time [s]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save(fig, path)


def fig_slam_map(grid, trace, path, env=None) -> None:
    """Grayscale occupancy map with the estimated and true paths overlaid."""
    img = (grid.cells >> 8).astype(np.uint8).T[::-1, :]
    x0, y0 = grid.origin
    extent = (x0, x0 + grid.side * grid.resolution,
              y0, y0 + grid.side * grid.resolution)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(img, cmap="gray", vmin=0, vmax=255, extent=extent, origin="upper")
    if trace:
        ax.plot([r.true_x for r in trace], [r.true_y for r in trace],
                color="tab:green", linewidth=1.0, label="true path")
        ax.plot([r.x for r in trace], [r.y for r in trace],
                color="tab:red", linewidth=1.0, linestyle="--", label="estimated path")
        ax.legend(fontsize=8, loc="upper right")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    save(fig, path)


def fig_separation(distance_series, d_min, d_max, path) -> None:
    """True and estimated pair distance over time against the policy band."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ticks = [t for t, _, _ in distance_series]
    ax.plot(ticks, [d for _, d, _ in distance_series], label="true distance")
    est = [(t, e) for t, _, e in distance_series if e is not None]
    if est:
        ax.plot([t for t, _ in est], [e for _, e in est],
                linewidth=0.8, alpha=0.7, label="estimated distance")
    ax.axhline(d_min, color="red", linestyle="--", linewidth=1)
    ax.axhline(d_max, color="red", linestyle="--", linewidth=1)
    ax.set_xlabel("tick")
    ax.set_ylabel("distance [m]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save(fig, path)
