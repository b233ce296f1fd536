"""Render figures from benchmark result files, next to the delimited output."""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_trials(path):
    rows = []
    with open(path) as f:
        header = f.readline().rstrip("\n").split("\t")
        for line in f:
            cols = line.rstrip("\n").split("\t")
            rows.append(dict(zip(header, cols)))
    return rows


def render_report(out_dir) -> list[str]:
    """Read summary.json / trials.tsv in out_dir and write PNG figures there."""
    with open(os.path.join(out_dir, "summary.json")) as f:
        summary = json.load(f)
    trials = _read_trials(os.path.join(out_dir, "trials.tsv"))
    written = []

    cells = summary["cells"]
    labels = [f"{c['object']}\n{c['pattern']}" for c in cells]
    rates = [c["success_rate"] for c in cells]
    fig, ax = plt.subplots(figsize=(max(6, 0.7 * len(cells)), 4))
    ax.bar(range(len(cells)), rates, color="#4878b0")
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels(labels, fontsize=7, rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("success rate")
    ax.axhline(summary["overall"]["success_rate"], color="#c44e52", ls="--", lw=1,
               label=f"overall {summary['overall']['success_rate']:.2f}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "success_rates.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    times = [float(r["approach_time_s"]) for r in trials if r["success"] == "1"]
    fig, ax = plt.subplots(figsize=(6, 4))
    if times:
        ax.hist(times, bins=min(20, max(5, len(times) // 3)), color="#6aa56a",
                edgecolor="white")
    ax.set_xlabel("approach time [s]")
    ax.set_ylabel("successful trials")
    fig.tight_layout()
    p = os.path.join(out_dir, "approach_times.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)
    return written
