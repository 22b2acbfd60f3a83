"""Evaluation metrics and batch aggregation.

Four numbers summarize an attack batch: fooling rate, median queries, mean
absolute perturbation (over the whole video, and over the masked region
only) and sparsity (fraction of untouched pixels). Everything here is pure
arithmetic over attack results; serialization keeps a stable key order so
identical runs produce identical report bytes.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch, EmptyMask, ShapeMismatch
from .tensors import BinaryMask, as_block

__all__ = [
    "mean_abs_perturbation",
    "mean_abs_perturbation_masked",
    "sparsity",
    "MetricsRow",
    "MetricsSummary",
    "aggregate",
    "summary_report",
    "write_rows_csv",
]


def mean_abs_perturbation(perturbation) -> float:
    """Mean |value| over every position of the video. The MAP metric."""
    return float(np.mean(np.abs(as_block(perturbation))))


def mean_abs_perturbation_masked(perturbation, mask: BinaryMask) -> float:
    """Mean |value| over the masked positions only. The MAP* metric."""
    arr = as_block(perturbation)
    if arr.shape != mask.data.shape:
        raise ShapeMismatch(f"perturbation shape {arr.shape} != mask shape {mask.data.shape}")
    selected = mask.data != 0.0
    if not selected.any():
        raise EmptyMask("masked mean over an all-zero mask")
    return float(np.mean(np.abs(arr[selected])))


def sparsity(mask: BinaryMask) -> float:
    """Fraction of pixels receiving no perturbation: 1 - mean per-frame fill."""
    t = mask.frames
    per_frame = mask.data.reshape(t, -1).mean(axis=1)
    return float(1.0 - per_frame.mean())


@dataclass(frozen=True)
class MetricsRow:
    id: str
    success: bool
    queries: int
    map: float
    map_masked: float
    sparsity: float


@dataclass(frozen=True)
class MetricsSummary:
    """Batch aggregates plus the per-sample rows they derive from.

    Fooling rate and median queries cover every attempted attack; the three
    perturbation aggregates average the successful ones (``*_all`` variants
    average every attempt, emitted because either convention is defensible).
    """

    fooling_rate: float
    median_queries: float
    map_mean: float | None
    map_masked_mean: float | None
    sparsity_mean: float | None
    map_mean_all: float
    map_masked_mean_all: float
    sparsity_mean_all: float
    rows: tuple[MetricsRow, ...]


def aggregate(results, ids=None) -> MetricsSummary:
    """Aggregate attack results into a batch summary.

    ``results`` are AttackResult-like objects (success, queries, map,
    map_masked, sparsity attributes). Order of the input does not affect any
    aggregate. An even-sized batch takes the mean of the two middle query
    counts as the median.
    """
    results = list(results)
    if not results:
        raise EmptyBatch("no attack results to aggregate")
    if ids is None:
        ids = [str(i) for i in range(len(results))]
    rows = tuple(
        MetricsRow(
            id=str(sample_id),
            success=bool(r.success),
            queries=int(r.queries),
            map=float(r.map),
            map_masked=float(r.map_masked),
            sparsity=float(r.sparsity),
        )
        for sample_id, r in zip(ids, results, strict=True)
    )
    succeeded = [r for r in rows if r.success]

    def mean_of(values):
        values = list(values)
        return float(np.mean(values)) if values else None

    return MetricsSummary(
        fooling_rate=len(succeeded) / len(rows),
        median_queries=float(statistics.median(r.queries for r in rows)),
        map_mean=mean_of(r.map for r in succeeded),
        map_masked_mean=mean_of(r.map_masked for r in succeeded),
        sparsity_mean=mean_of(r.sparsity for r in succeeded),
        map_mean_all=float(np.mean([r.map for r in rows])),
        map_masked_mean_all=float(np.mean([r.map_masked for r in rows])),
        sparsity_mean_all=float(np.mean([r.sparsity for r in rows])),
        rows=rows,
    )


def summary_report(summary: MetricsSummary, config: dict) -> dict:
    """Report document with the stable layout consumed by external tooling.

    ``summary`` holds the success-only perturbation aggregates; the
    every-attempt variants ride along under ``summary_all``.
    """
    return {
        "config": config,
        "rows": [
            {
                "id": r.id,
                "success": r.success,
                "queries": r.queries,
                "map": r.map,
                "map_masked": r.map_masked,
                "sparsity": r.sparsity,
            }
            for r in summary.rows
        ],
        "summary": {
            "fr": summary.fooling_rate,
            "mq": summary.median_queries,
            "map": summary.map_mean,
            "map_masked": summary.map_masked_mean,
            "s": summary.sparsity_mean,
        },
        "summary_all": {
            "fr": summary.fooling_rate,
            "mq": summary.median_queries,
            "map": summary.map_mean_all,
            "map_masked": summary.map_masked_mean_all,
            "s": summary.sparsity_mean_all,
        },
    }


def write_rows_csv(path, rows, extra_columns=None) -> None:
    """Flat per-sample export for plotting tools.

    Accepts MetricsRow objects or plain row dicts. ``extra_columns``
    prepends constant columns, e.g. a variant name on benchmark exports.
    """

    def value(row, key):
        return row[key] if isinstance(row, dict) else getattr(row, key)

    extra = dict(extra_columns or {})
    header = [*extra.keys(), "id", "success", "queries", "map", "map_masked", "sparsity"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            writer.writerow([
                *extra.values(),
                value(r, "id"),
                int(value(r, "success")),
                value(r, "queries"),
                f"{value(r, 'map'):.6f}",
                f"{value(r, 'map_masked'):.6f}",
                f"{value(r, 'sparsity'):.6f}",
            ])
