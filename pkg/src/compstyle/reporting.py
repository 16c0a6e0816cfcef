"""DICE reports: CSV serialization plus rendered figures.

Reports are flat rows of (method, group, label, dice) with run metadata
repeated per row; floats are written with repr so a write -> read -> write
cycle is byte-identical. Every CSV report gets a PNG figure next to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

CSV_HEADER = "method,seed,config_hash,group,label,dice"


@dataclass
class ReportRow:
    method: str
    group: str
    label: str
    dice: float


@dataclass
class DiceReport:
    method: str
    seed: int
    config_hash: str
    rows: list

    def value(self, group, label="mean"):
        for row in self.rows:
            if row.group == group and row.label == label:
                return row.dice
        raise KeyError(f"no row for ({group}, {label})")

    def groups(self):
        seen = []
        for row in self.rows:
            if row.group not in seen:
                seen.append(row.group)
        return seen

    def ood_mean_from_domains(self):
        vals = [r.dice for r in self.rows if r.group.startswith("domain:") and r.label == "mean"]
        return float(np.mean(vals))


def write_report_csv(report: DiceReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(f"{r.method},{report.seed},{report.config_hash},{r.group},{r.label},{r.dice!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_report_csv(path) -> DiceReport:
    lines = Path(path).read_text().splitlines()
    if lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected report header")
    rows = []
    seed, config_hash, method = 0, "", ""
    for line in lines[1:]:
        if not line.strip():
            continue
        method, seed_s, config_hash, group, label, dice = line.split(",")
        seed = int(seed_s)
        rows.append(ReportRow(method, group, label, float(dice)))
    return DiceReport(method=method, seed=seed, config_hash=config_hash, rows=rows)


# -- figures --------------------------------------------------------------------


def render_report_figure(report: DiceReport, path) -> Path:
    """Bar chart of per-group mean DICE next to the CSV."""
    path = Path(path)
    groups = report.groups()
    labels = sorted({r.label for r in report.rows if r.label != "mean"}, key=int)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(groups)), 3.6))
    x = np.arange(len(groups))
    if len(labels) > 1:
        width = 0.8 / len(labels)
        for li, lab in enumerate(labels):
            vals = [report.value(g, lab) for g in groups]
            ax.bar(x + (li - (len(labels) - 1) / 2) * width, vals, width, label=f"class {lab}")
        ax.legend(fontsize=8)
    else:
        ax.bar(x, [report.value(g) for g in groups], 0.6, color="#4878d0")
    ax.set_xticks(x)
    ax.set_xticklabels(groups, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("DICE")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"{report.method or 'model'} (seed {report.seed})", fontsize=10)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_history_figure(history, path) -> Path:
    """Training loss and validation DICE curves."""
    path = Path(path)
    epochs = [h["epoch"] for h in history]
    fig, ax1 = plt.subplots(figsize=(6.0, 3.4))
    ax1.plot(epochs, [h["loss"] for h in history], color="#d65f5f", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss", color="#d65f5f")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [h["val_dice"] for h in history], color="#4878d0", label="val DICE")
    ax2.set_ylabel("val DICE", color="#4878d0")
    ax2.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_history_csv(history, path) -> Path:
    path = Path(path)
    lines = ["epoch,loss,val_dice"]
    for h in history:
        lines.append(f"{h['epoch']},{h['loss']!r},{h['val_dice']!r}")
    path.write_text("\n".join(lines) + "\n")
    return path
