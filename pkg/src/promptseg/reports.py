"""Report serialization (CSV + JSON) and figure rendering.

Output is deterministic: fixed column orders, repr-formatted floats, sorted
JSON keys, and LF newlines, so re-running an identical configuration yields
byte-identical files.

CSV schemas (stable, documented contract):

* per-sample metrics: ``dataset,sample_id,metric,value,polarity,flag``
* trial statistics:  ``dataset,metric,ideal,mean,std,n_trials,delta,delta_display``
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import PromptsegError
from .metrics import LOWER_BETTER, MetricReport, MetricValue, POLARITY, polarity_of
from .perturb import TrialStats

__all__ = [
    "PER_SAMPLE_HEADER",
    "TRIALS_HEADER",
    "write_report",
    "per_sample_csv",
    "trials_csv",
    "aggregates_json",
    "trials_json",
    "read_per_sample_csv",
    "write_run_manifest",
    "render_aggregate_figure",
    "render_trials_figure",
    "delta_display",
]

PER_SAMPLE_HEADER = ("dataset", "sample_id", "metric", "value", "polarity", "flag")
TRIALS_HEADER = ("dataset", "metric", "ideal", "mean", "std", "n_trials", "delta", "delta_display")


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_bytes(path: Union[str, Path], data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def per_sample_csv(reports: Sequence[MetricReport]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PER_SAMPLE_HEADER)
    for report in reports:
        dataset = report.dataset or ""
        for sample_id, values in report.per_sample:
            for mv in values:
                writer.writerow(
                    (dataset, sample_id, mv.name, _fmt(mv.value), mv.polarity, mv.flag or "")
                )
    return buf.getvalue().encode("utf-8")


def delta_display(stats: TrialStats) -> str:
    """Benchmark-table rendering of the relative change: a direction arrow
    with the magnitude in percent. The raw sign carries the direction;
    whether that is a degradation depends on the metric's polarity."""
    if stats.delta_vs_ideal is None:
        return "n/a"
    pct = abs(stats.delta_vs_ideal) * 100.0
    if stats.delta_vs_ideal == 0:
        return "0.00%"
    arrow = "↓" if stats.delta_vs_ideal < 0 else "↑"
    return f"{arrow}{pct:.2f}%"


def _delta_signed(stats: TrialStats) -> str:
    if stats.delta_vs_ideal is None:
        return ""
    return f"{stats.delta_vs_ideal:+.6f}"


def trials_csv(stats: Sequence[TrialStats], dataset: str = "") -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRIALS_HEADER)
    for s in stats:
        writer.writerow(
            (
                dataset,
                s.metric,
                _fmt(s.ideal),
                _fmt(s.mean),
                _fmt(s.std),
                s.n_trials,
                _delta_signed(s),
                delta_display(s),
            )
        )
    return buf.getvalue().encode("utf-8")


def read_per_sample_csv(path: Union[str, Path]) -> list[MetricReport]:
    """Rebuild per-dataset reports from a per-sample CSV (the ``report``
    subcommand's input). Aggregates are recomputed from the rows."""
    grouped: dict[str, dict[str, list[MetricValue]]] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != PER_SAMPLE_HEADER:
            raise PromptsegError(f"{path}: unexpected CSV header {header}")
        for row in reader:
            dataset, sample_id, metric, value, polarity, flag = row
            mv = MetricValue(
                name=metric, value=float(value), polarity=polarity, flag=flag or None
            )
            if dataset not in grouped:
                grouped[dataset] = {}
                order.append(dataset)
            grouped[dataset].setdefault(sample_id, []).append(mv)
    return [
        MetricReport.build(
            ((sid, vals) for sid, vals in grouped[name].items()), dataset=name or None
        )
        for name in order
    ]


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def aggregates_json(
    reports: Sequence[MetricReport], cross: Optional[MetricReport] = None
) -> bytes:
    payload: dict = {"datasets": {}}
    for report in reports:
        payload["datasets"][report.dataset or ""] = {
            "n_samples": len(report.per_sample),
            "aggregates": {mv.name: mv.value for mv in report.aggregates},
            "notes": list(report.notes),
        }
    if cross is not None:
        payload["cross_dataset_mean"] = {mv.name: mv.value for mv in cross.aggregates}
    return _json_bytes(payload)


def trials_json(stats: Sequence[TrialStats], events: Sequence[str], dataset: str = "") -> bytes:
    payload = {
        "dataset": dataset,
        "trials": [
            {
                "metric": s.metric,
                "ideal": s.ideal,
                "mean": s.mean,
                "std": s.std,
                "n_trials": s.n_trials,
                "delta_vs_ideal": s.delta_vs_ideal,
                "delta_display": delta_display(s),
            }
            for s in stats
        ],
        "events": list(events),
    }
    return _json_bytes(payload)


def _json_bytes(payload: dict) -> bytes:
    return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")


# --------------------------------------------------------------------------
# dispatch, manifest, figures
# --------------------------------------------------------------------------

def write_report(report, fmt: str, path: Union[str, Path]) -> None:
    """Serialize a MetricReport list or TrialStats list to ``csv`` or ``json``."""
    items = list(report) if isinstance(report, (list, tuple)) else [report]
    if not items:
        raise PromptsegError("refusing to write an empty report")
    if isinstance(items[0], MetricReport):
        data = per_sample_csv(items) if fmt == "csv" else aggregates_json(items)
    elif isinstance(items[0], TrialStats):
        data = trials_csv(items) if fmt == "csv" else trials_json(items, events=())
    else:
        raise PromptsegError(f"cannot serialize {type(items[0]).__name__}")
    if fmt not in ("csv", "json"):
        raise PromptsegError(f"unknown report format {fmt!r}")
    _write_bytes(path, data)


def write_run_manifest(
    path: Union[str, Path],
    config: dict,
    segmenter_identity: str,
    protocol_version: str,
    run: dict,
) -> None:
    """Everything needed to reproduce the run exactly: the full config and its
    hash, the seed, the protocol version, and the segmenter identity."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    payload = {
        "config": config,
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "seed": config.get("rng_seed"),
        "protocol": protocol_version,
        "segmenter": segmenter_identity,
        "run": run,
    }
    _write_bytes(path, _json_bytes(payload))


def _save_fig(fig, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_aggregate_figure(reports: Sequence[MetricReport], path: Union[str, Path]) -> None:
    """Grouped bar chart of aggregate metric values, one group per metric and
    one bar per dataset; down-arrow metrics are marked in the tick labels."""
    names: list[str] = []
    for report in reports:
        for mv in report.aggregates:
            if mv.name not in names:
                names.append(mv.name)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(names)), 4.0))
    width = 0.8 / max(1, len(reports))
    for i, report in enumerate(reports):
        values = [dict((m.name, m.value) for m in report.aggregates).get(n) for n in names]
        xs = [j + i * width for j in range(len(names))]
        ax.bar(
            [x for x, v in zip(xs, values) if v is not None],
            [v for v in values if v is not None],
            width=width,
            label=report.dataset or "dataset",
        )
    labels = [
        f"{n} ↓" if POLARITY.get(n) == LOWER_BETTER else f"{n} ↑" for n in names
    ]
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(names))])
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("aggregate value")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title("Aggregate metrics")
    _save_fig(fig, path)


def render_trials_figure(stats: Sequence[TrialStats], path: Union[str, Path], dataset: str = "") -> None:
    """Mean +/- std per metric under perturbed prompts, with the ideal value
    marked and the relative change annotated."""
    fig, ax = plt.subplots(figsize=(max(6.0, 1.4 * len(stats)), 4.0))
    xs = range(len(stats))
    ax.errorbar(
        xs,
        [s.mean for s in stats],
        yerr=[s.std for s in stats],
        fmt="o",
        capsize=4,
        label="perturbed mean ± std",
    )
    ax.scatter(xs, [s.ideal for s in stats], marker="_", s=300, color="tab:red", label="ideal")
    for x, s in zip(xs, stats):
        ax.annotate(
            delta_display(s),
            (x, s.mean),
            textcoords="offset points",
            xytext=(6, 6),
            fontsize=8,
        )
    labels = [
        f"{s.metric} ↓" if polarity_of(s.metric) == LOWER_BETTER else f"{s.metric} ↑"
        for s in stats
    ]
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("metric value")
    ax.legend(fontsize=8)
    ax.set_title(f"Prompt robustness{': ' + dataset if dataset else ''}")
    _save_fig(fig, path)
