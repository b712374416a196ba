"""Dataset statistics: delimited summaries plus rendered figures.

CSV files are the machine-readable contract; the SVG charts next to them
are a convenience rendering of the same numbers.
"""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .annotate import DatasetManifest
from .scene_synth import (
    EVENING_PERIODS,
    TimePart,
    Weather,
    evening_period_for_hour,
)

# stable ids inside the SVG output so identical runs produce identical bytes
matplotlib.rcParams["svg.hashsalt"] = "mvforge"

_DAY_PART_LABELS = [p.value for p in TimePart if p is not TimePart.EVENING]


def dataset_stats(manifest: DatasetManifest) -> dict:
    """Tallies over a manifest: per-frame counts, weather, time of day, splits."""
    counts = []
    weather = Counter()
    parts = Counter()
    periods = Counter()
    persons_total = 0
    frames_total = 0
    for entry in manifest.scenes:
        for fe in entry.frames:
            frame = fe.frame
            frames_total += 1
            counts.append(frame.person_count)
            persons_total += frame.person_count
            weather[frame.environment.weather.value] += 1
            parts[frame.environment.time_part.value] += 1
            if frame.environment.time_part is TimePart.EVENING:
                periods[evening_period_for_hour(frame.environment.hour)] += 1
            else:
                periods[frame.environment.time_part.value] += 1
    splits = manifest.splits()
    return {
        "scenes": len(manifest.scenes),
        "frames": frames_total,
        "views": int(manifest.config["views"]),
        "images": frames_total * int(manifest.config["views"]),
        "persons_total": persons_total,
        "count_min": int(min(counts)) if counts else 0,
        "count_mean": float(np.mean(counts)) if counts else 0.0,
        "count_max": int(max(counts)) if counts else 0,
        "counts": counts,
        "weather": weather,
        "time_parts": parts,
        "time_periods": periods,
        "split_sizes": {name: len(ids) for name, ids in splits.items()},
    }


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _save_fig(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_stats(manifest: DatasetManifest, out_dir, bins: int = 16) -> list[str]:
    """Write the statistics bundle; returns the file names produced."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats = dataset_stats(manifest)
    frames = max(stats["frames"], 1)
    written = []

    card_rows = [
        ("scenes", stats["scenes"]),
        ("frames", stats["frames"]),
        ("views", stats["views"]),
        ("images", stats["images"]),
        ("persons_total", stats["persons_total"]),
        ("count_min", stats["count_min"]),
        ("count_mean", f"{stats['count_mean']:.3f}"),
        ("count_max", stats["count_max"]),
    ]
    card_rows += [
        (f"split_{name}", size) for name, size in sorted(stats["split_sizes"].items())
    ]
    _write_csv(out / "dataset_card.csv", ("key", "value"), card_rows)
    written.append("dataset_card.csv")

    counts = np.array(stats["counts"], dtype=float)
    lo = int(manifest.config["count_min"])
    hi = int(manifest.config["count_max"])
    hist, edges = np.histogram(counts, bins=bins, range=(lo, hi + 1))
    _write_csv(
        out / "counts_hist.csv",
        ("bin_lo", "bin_hi", "frames"),
        [(f"{edges[i]:.1f}", f"{edges[i + 1]:.1f}", int(hist[i])) for i in range(bins)],
    )
    written.append("counts_hist.csv")

    weather_rows = [
        (w.value, stats["weather"].get(w.value, 0), f"{stats['weather'].get(w.value, 0) / frames:.6f}")
        for w in Weather
    ]
    _write_csv(out / "weather.csv", ("weather", "frames", "share"), weather_rows)
    written.append("weather.csv")

    part_rows = [
        (p.value, stats["time_parts"].get(p.value, 0), f"{stats['time_parts'].get(p.value, 0) / frames:.6f}")
        for p in TimePart
    ]
    _write_csv(out / "time_parts.csv", ("part", "frames", "share"), part_rows)
    written.append("time_parts.csv")

    period_labels = _DAY_PART_LABELS + list(EVENING_PERIODS)
    period_rows = [
        (label, stats["time_periods"].get(label, 0), f"{stats['time_periods'].get(label, 0) / frames:.6f}")
        for label in period_labels
    ]
    _write_csv(out / "time_periods.csv", ("period", "frames", "share"), period_rows)
    written.append("time_periods.csv")

    fig, ax = plt.subplots(figsize=(7, 4))
    centers = 0.5 * (edges[:-1] + edges[1:])
    ax.bar(centers, hist, width=0.9 * (edges[1] - edges[0]), color="#4878a8")
    ax.set_xlabel("people per frame")
    ax.set_ylabel("frames")
    ax.set_title("crowd size distribution")
    _save_fig(fig, out / "counts_hist.svg")
    written.append("counts_hist.svg")

    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    labels = [w.value for w in Weather if stats["weather"].get(w.value, 0) > 0]
    sizes = [stats["weather"][l] for l in labels]
    if sizes:
        ax.pie(sizes, labels=labels, autopct="%1.1f%%", startangle=90)
    ax.set_title("weather")
    _save_fig(fig, out / "weather_pie.svg")
    written.append("weather_pie.svg")

    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    labels = [l for l in period_labels if stats["time_periods"].get(l, 0) > 0]
    sizes = [stats["time_periods"][l] for l in labels]
    if sizes:
        ax.pie(sizes, labels=labels, autopct="%1.1f%%", startangle=90)
    ax.set_title("time of day")
    _save_fig(fig, out / "time_pie.svg")
    written.append("time_pie.svg")

    return written
