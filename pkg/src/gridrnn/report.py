"""Text reports and their figure renderings.

Every report path writes delimited plain text first (that is what the
tests and downstream tooling parse) and a matplotlib figure next to it for
human eyes.  Figures always go through the Agg backend.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .bench import BenchRow, plain_dense_ratios, scaling_ratios  # noqa: E402
from .training import MetricsReport, TrainHistory  # noqa: E402


def _fmt(value: float) -> str:
    return f"{value:.10g}"


# ---------------------------------------------------------------------------
# training history
# ---------------------------------------------------------------------------

def format_history(history: TrainHistory) -> str:
    """One `epoch loss lr gpa aca miou` row per epoch."""
    lines = []
    for e in history.epochs:
        lines.append(
            f"{e.epoch} {_fmt(e.loss)} {_fmt(e.lr_rnn)} {_fmt(e.gpa)} {_fmt(e.aca)} {_fmt(e.mean_iou)}\n"
        )
    return "".join(lines)


def write_history(path, history: TrainHistory) -> None:
    Path(path).write_text(format_history(history), encoding="ascii")


def plot_history(history: TrainHistory, path) -> None:
    epochs = [e.epoch for e in history.epochs]
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [e.loss for e in history.epochs], marker="o", ms=3)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_loss2 = ax_loss.twinx()
    ax_loss2.plot(epochs, [e.lr_rnn for e in history.epochs], color="tab:gray", lw=0.8)
    ax_loss2.set_ylabel("learning rate", color="tab:gray")
    for key, label in (("gpa", "GPA"), ("aca", "ACA"), ("mean_iou", "mean IoU")):
        ax_metric.plot(epochs, [getattr(e, key) for e in history.epochs], marker="o", ms=3, label=label)
    ax_metric.set_xlabel("epoch")
    ax_metric.set_ylabel("validation metric")
    ax_metric.set_ylim(0, 1.02)
    ax_metric.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


# ---------------------------------------------------------------------------
# evaluation metrics
# ---------------------------------------------------------------------------

def format_metrics(report: MetricsReport) -> str:
    """Aligned table for reading plus a key=value block for parsing."""
    lines = [
        f"{'global pixel accuracy':<24}{report.gpa:.4f}",
        f"{'average class accuracy':<24}{report.aca:.4f}",
        f"{'mean IoU':<24}{report.mean_iou:.4f}",
    ]
    for cls in sorted(report.per_class_iou):
        lines.append(f"{f'IoU class {cls}':<24}{report.per_class_iou[cls]:.4f}")
    lines.append("")
    lines.append(f"gpa={_fmt(report.gpa)}")
    lines.append(f"aca={_fmt(report.aca)}")
    lines.append(f"miou={_fmt(report.mean_iou)}")
    for cls in sorted(report.per_class_iou):
        lines.append(f"iou_{cls}={_fmt(report.per_class_iou[cls])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# benchmark tables
# ---------------------------------------------------------------------------

def format_bench(rows: list[BenchRow]) -> str:
    lines = [f"{'size':<10}{'variant':<18}{'median_ms':>12}{'reps':>6}"]
    for row in rows:
        size = f"{row.dims[0]}x{row.dims[1]}"
        lines.append(f"{size:<10}{row.variant.value:<18}{row.median_s * 1e3:>12.3f}{row.reps:>6}")
    for dims, ratio in plain_dense_ratios(rows):
        lines.append(f"dense/plain time ratio at {dims[0]}x{dims[1]}: {ratio:.2f}")
    for variant, ratios in scaling_ratios(rows).items():
        for small, large, ratio in ratios:
            lines.append(
                f"{variant.value} scaling {small[0]}x{small[1]} -> {large[0]}x{large[1]}: {ratio:.2f}x"
            )
    return "\n".join(lines) + "\n"


def write_bench(path, rows: list[BenchRow]) -> None:
    lines = ["size\tvariant\tmedian_s\treps\n"]
    for row in rows:
        lines.append(f"{row.dims[0]}x{row.dims[1]}\t{row.variant.value}\t{_fmt(row.median_s)}\t{row.reps}\n")
    Path(path).write_text("".join(lines), encoding="ascii")


def plot_bench(rows: list[BenchRow], path) -> None:
    by_variant: dict = {}
    for row in rows:
        by_variant.setdefault(row.variant, []).append(row)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for variant, vrows in by_variant.items():
        vrows = sorted(vrows, key=lambda r: r.dims[0] * r.dims[1])
        units = [r.dims[0] * r.dims[1] for r in vrows]
        ax.plot(units, [r.median_s * 1e3 for r in vrows], marker="o", label=variant.value)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("grid units")
    ax.set_ylabel("median forward time (ms)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
