"""Report rendering: text tables, JSON/CSV output, and figure files.

The benchmark grid mirrors the usual results-table layout: one row per
(backend, variant), one column per dataset, each cell the headline score.
Figures are rendered headlessly straight onto Agg canvases, so no display or
global pyplot state is involved.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .backend import Backend
from .core import Instance
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    Embedder,
    evaluate_detection,
    evaluate_extraction,
    evaluate_stance,
)
from .pipeline import JobSpec, ListSink, TopicSource, run_batch
from .prompting import PromptVariant, Task


@dataclass(frozen=True)
class EvalGrid:
    """Rows are (backend, variant) pairs; columns are dataset names."""

    row_labels: tuple[tuple[str, str], ...]
    columns: tuple[str, ...]
    cells: tuple[tuple[Optional[float], ...], ...]

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.row_labels):
            raise ValueError("one cell row per row label required")
        if any(len(row) != len(self.columns) for row in self.cells):
            raise ValueError("every cell row must cover all columns")


def _fmt_cell(value: Optional[float]) -> str:
    return "----" if value is None else f"{100 * value:.1f}"


def render_grid_text(grid: EvalGrid) -> str:
    names = [f"{backend} ({variant})" for backend, variant in grid.row_labels]
    width = max([len("Model")] + [len(n) for n in names]) + 2
    col_width = max([8] + [len(c) + 2 for c in grid.columns])
    lines = [
        "Model".ljust(width) + "".join(c.rjust(col_width) for c in grid.columns),
        "".ljust(width) + "".join("F1".rjust(col_width) for _ in grid.columns),
    ]
    for name, row in zip(names, grid.cells):
        lines.append(
            name.ljust(width) + "".join(_fmt_cell(v).rjust(col_width) for v in row)
        )
    return "\n".join(lines) + "\n"


def grid_to_csv(grid: EvalGrid) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["model", "variant", *grid.columns])
    for (backend, variant), row in zip(grid.row_labels, grid.cells):
        writer.writerow(
            [backend, variant, *["" if v is None else f"{v:.6f}" for v in row]]
        )
    return buffer.getvalue()


def grid_to_dict(grid: EvalGrid) -> dict[str, Any]:
    return {
        "rows": [list(label) for label in grid.row_labels],
        "columns": list(grid.columns),
        "cells": [list(row) for row in grid.cells],
    }


_TASKS_FOR_EVAL: dict[Task, frozenset[Task]] = {
    Task.DETECT: frozenset({Task.DETECT}),
    Task.EXTRACT: frozenset({Task.EXTRACT}),
    Task.STANCE: frozenset({Task.STANCE}),
}


def run_table(
    backends: Sequence[tuple[str, Backend]],
    datasets: Mapping[str, Sequence[Instance]],
    task: Task,
    variants: Sequence[PromptVariant] = (PromptVariant.WITH_ATN, PromptVariant.NO_ATN),
    concurrency: int = 1,
    embedder: Optional[Embedder] = None,
) -> EvalGrid:
    """Run one task over every (backend, variant, dataset) combination and
    collect the headline scores into a grid.

    Stance cells take their topics from the instances (the usual benchmark
    setup); extraction cells are scored with ``embedder``, defaulting to each
    backend's own embedding endpoint.
    """
    columns = tuple(datasets)
    row_labels: list[tuple[str, str]] = []
    cells: list[tuple[Optional[float], ...]] = []
    used_variants = variants if task is not Task.EXTRACT else (PromptVariant.WITH_ATN,)
    for backend_name, backend in backends:
        for variant in used_variants:
            spec = JobSpec(
                tasks=_TASKS_FOR_EVAL[task],
                variant=variant,
                topic_source=TopicSource.FROM_INSTANCE,
                concurrency=concurrency,
            )
            row: list[Optional[float]] = []
            for corpus in datasets.values():
                sink = ListSink()
                run_batch(backend, list(corpus), spec, sink)
                records = [record for _, record in sink.records]
                try:
                    if task is Task.DETECT:
                        report = evaluate_detection(list(corpus), records)
                    elif task is Task.STANCE:
                        report = evaluate_stance(list(corpus), records)
                    else:
                        report = evaluate_extraction(
                            list(corpus), records, embedder or backend
                        )
                    row.append(report.f1)
                except ValueError:
                    row.append(None)  # dataset lacks gold labels for this task
            row_labels.append((backend_name, variant.value))
            cells.append(tuple(row))
    return EvalGrid(
        row_labels=tuple(row_labels), columns=columns, cells=tuple(cells)
    )


# -- single-report rendering ----------------------------------------------


def report_to_dict(report: EvalReport) -> dict[str, Any]:
    out: dict[str, Any] = {
        "task": report.task.value,
        "f1": report.f1,
        "n": report.n,
        "per_class_f1": dict(report.per_class_f1),
        "breakdowns": {k: dict(v) for k, v in report.breakdowns.items()},
    }
    if report.confusion is not None:
        out["confusion"] = report.confusion.to_dict()
    if report.cte is not None:
        out["cte"] = {
            "score": report.cte.score,
            "coverage": report.cte.coverage,
            "zeroed_count": report.cte.zeroed_count,
            "n": report.cte.n,
        }
    return out


def render_report_text(report: EvalReport) -> str:
    lines = [
        f"task: {report.task.value}",
        f"n: {report.n}",
        f"score: {report.f1:.4f}",
    ]
    if report.per_class_f1:
        lines.append("per-class F1:")
        for name, value in report.per_class_f1.items():
            lines.append(f"  {name:<14}{value:.4f}")
    if report.confusion is not None:
        lines.append("confusion (rows = gold, cols = predicted):")
        width = max(len(c) for c in report.confusion.classes) + 2
        header = " " * width + "".join(c.rjust(width) for c in report.confusion.classes)
        lines.append(header)
        for name, row in zip(report.confusion.classes, report.confusion.counts):
            lines.append(name.ljust(width) + "".join(str(v).rjust(width) for v in row))
    if report.cte is not None:
        lines.append(
            f"topic similarity: {report.cte.score:.4f} "
            f"(coverage {report.cte.coverage:.2f}, zeroed {report.cte.zeroed_count}/{report.cte.n})"
        )
    for key, groups in report.breakdowns.items():
        lines.append(f"accuracy by {key}:")
        for group, acc in groups.items():
            lines.append(f"  {group:<14}{acc:.4f}")
    return "\n".join(lines) + "\n"


def confusion_to_csv(confusion: ConfusionMatrix) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["gold\\pred", *confusion.classes])
    for name, row in zip(confusion.classes, confusion.counts):
        writer.writerow([name, *row])
    return buffer.getvalue()


# -- figures ---------------------------------------------------------------


def _new_axes(figsize: tuple[float, float]):
    figure = Figure(figsize=figsize)
    FigureCanvasAgg(figure)
    return figure, figure.subplots()


def save_confusion_figure(
    confusion: ConfusionMatrix, path: Union[Path, str], title: str = ""
) -> Path:
    figure, ax = _new_axes((4.8, 4.2))
    data = np.asarray(confusion.counts, dtype=float)
    image = ax.imshow(data, cmap="Blues")
    ax.set_xticks(range(len(confusion.classes)), confusion.classes, rotation=30, ha="right")
    ax.set_yticks(range(len(confusion.classes)), confusion.classes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    if title:
        ax.set_title(title)
    threshold = data.max() / 2 if data.size else 0
    for i, row in enumerate(confusion.counts):
        for j, value in enumerate(row):
            ax.text(j, i, str(value), ha="center", va="center",
                    color="white" if data[i, j] > threshold else "black")
    figure.colorbar(image, ax=ax, shrink=0.8)
    figure.tight_layout()
    figure.savefig(path, dpi=150)
    return Path(path)


def save_breakdown_figure(
    breakdowns: Mapping[str, Mapping[str, float]], path: Union[Path, str]
) -> Path:
    keys = list(breakdowns)
    figure = Figure(figsize=(5.5, 3.2 * max(1, len(keys))))
    FigureCanvasAgg(figure)
    axes = figure.subplots(len(keys), 1, squeeze=False)
    for ax, key in zip((a for row in axes for a in row), keys):
        groups = list(breakdowns[key])
        values = [breakdowns[key][g] for g in groups]
        ax.bar(range(len(groups)), values, color="#4878d0")
        ax.set_xticks(range(len(groups)), groups, rotation=20, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("accuracy")
        ax.set_title(f"detection accuracy by {key}")
    figure.tight_layout()
    figure.savefig(path, dpi=150)
    return Path(path)


def save_grid_figure(grid: EvalGrid, path: Union[Path, str]) -> Path:
    figure, ax = _new_axes((6.4, 4.0))
    n_rows = len(grid.row_labels)
    n_cols = len(grid.columns)
    width = 0.8 / max(1, n_rows)
    for r, (label, row) in enumerate(zip(grid.row_labels, grid.cells)):
        xs = [c + r * width for c in range(n_cols)]
        ys = [0.0 if v is None else v for v in row]
        ax.bar(xs, ys, width=width, label=f"{label[0]} ({label[1]})")
    ax.set_xticks(
        [c + width * (n_rows - 1) / 2 for c in range(n_cols)], grid.columns
    )
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("F1")
    ax.legend(fontsize=8)
    figure.tight_layout()
    figure.savefig(path, dpi=150)
    return Path(path)


def write_report_files(
    report: EvalReport,
    out_path: Union[Path, str],
    figures: bool = True,
) -> dict[str, Path]:
    """Write the report as JSON, a text table, delimited CSV, and (by
    default) rendered figures next to them. Returns the written paths."""
    out = Path(out_path)
    base = out.with_suffix("") if out.suffix else out
    written: dict[str, Path] = {}

    json_path = base.with_suffix(".json")
    json_path.write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    written["json"] = json_path

    text_path = base.with_suffix(".txt")
    text_path.write_text(render_report_text(report), encoding="utf-8")
    written["text"] = text_path

    if report.confusion is not None:
        csv_path = Path(f"{base}_confusion.csv")
        csv_path.write_text(confusion_to_csv(report.confusion), encoding="utf-8")
        written["confusion_csv"] = csv_path
        if figures:
            written["confusion_png"] = save_confusion_figure(
                report.confusion, Path(f"{base}_confusion.png"),
                title=f"{report.task.value} (n={report.n})",
            )
    if report.breakdowns and figures:
        written["breakdown_png"] = save_breakdown_figure(
            report.breakdowns, Path(f"{base}_breakdown.png")
        )
    return written


def write_grid_files(
    grid: EvalGrid, out_path: Union[Path, str], figures: bool = True
) -> dict[str, Path]:
    out = Path(out_path)
    base = out.with_suffix("") if out.suffix else out
    written: dict[str, Path] = {}
    json_path = base.with_suffix(".json")
    json_path.write_text(
        json.dumps(grid_to_dict(grid), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    written["json"] = json_path
    text_path = base.with_suffix(".txt")
    text_path.write_text(render_grid_text(grid), encoding="utf-8")
    written["text"] = text_path
    csv_path = base.with_suffix(".csv")
    csv_path.write_text(grid_to_csv(grid), encoding="utf-8")
    written["csv"] = csv_path
    if figures:
        written["png"] = save_grid_figure(grid, base.with_suffix(".png"))
    return written
