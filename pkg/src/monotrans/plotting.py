"""Loss curves from training logs and metric-vs-iteration curves from reports."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METRIC_KEYS = ("rmse", "mae", "rel", "iou", "map50")


class PlotError(ValueError):
    pass


def read_inputs(paths: list[str | Path]) -> tuple[list[dict], list[dict]]:
    """Split input files into training-log entries (*.jsonl) and metric reports (*.json).

    A directory contributes every *.jsonl / *.json file inside it. A .json file
    may hold one report object or a list of them.
    """
    logs, reports = [], []
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(p.glob("*.jsonl")) + sorted(p.glob("*.json"))
        elif p.exists():
            files.append(p)
        else:
            raise PlotError(f"{p}: no such file or directory")
    for f in files:
        if f.suffix == ".jsonl":
            logs += [json.loads(line) for line in f.read_text().splitlines() if line.strip()]
        else:
            obj = json.loads(f.read_text())
            reports += obj if isinstance(obj, list) else [obj]
    return logs, reports


def loss_figure(logs: list[dict]):
    steps = [e["step"] for e in logs]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in ("loss_total", "loss_geo", "loss_sem"):
        if all(key in e for e in logs):
            ax.plot(steps, [e[key] for e in logs], label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    return fig


def metric_figure(xs: list, ys: list, key: str, xlabel: str = "iterations"):
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(xs, ys, marker="o", label=key)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(key)
    ax.set_xticks(xs)
    fig.tight_layout()
    return fig


def plot_metrics(logs: list[dict], reports: list[dict], out_dir: str | Path) -> list[Path]:
    """Write loss.png for logs and one <metric>.png per metric for reports.

    Reports are placed on the x axis by their ``num_iterations`` key when present,
    otherwise by position.
    """
    if not logs and not reports:
        raise PlotError("nothing to plot: no log entries or reports found")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if logs:
        fig = loss_figure(logs)
        written.append(out_dir / "loss.png")
        fig.savefig(written[-1])
        plt.close(fig)
    if reports:
        xs = [r.get("num_iterations", i + 1) for i, r in enumerate(reports)]
        order = sorted(range(len(xs)), key=lambda i: xs[i])
        xlabel = "iterations" if "num_iterations" in reports[0] else "report"
        for key in METRIC_KEYS:
            pts = [(xs[i], reports[i][key]) for i in order if key in reports[i]]
            if not pts:
                continue
            fig = metric_figure([p[0] for p in pts], [p[1] for p in pts], key, xlabel)
            written.append(out_dir / f"{key}.png")
            fig.savefig(written[-1])
            plt.close(fig)
    return written
