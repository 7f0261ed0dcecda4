"""End-to-end evaluation pipelines: dataset in, reports out.

This is the layer the CLI drives. It loads GT masks, synthesizes prompts,
queries the segmenter, scores predictions, and assembles MetricReports, with
a worker pool over samples and deterministic result ordering.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import BinaryMask, EvalConfig, Prompt
from .kernels import component_boxes
from .metrics import (
    MetricReport,
    MetricValue,
    auroc,
    average_precision,
    ber,
    dice,
    image_anomaly_score,
    iou,
    mae,
    pro,
    s_measure,
    weighted_f_measure,
)
from .datasets import DatasetManifest, LazyPairs, load_mask, load_sequence
from .errors import CapabilityError, TransportError, UndefinedMetricError
from .perturb import PerturbSample, TrialStats, run_trials
from .prompts import box_prompt_run, everything_run, icl_context, simulate_clicks
from .temporal import bidirectional_3d, multiframe_schedule, run_video

__all__ = [
    "DEFAULT_METRICS",
    "POOLED_METRICS",
    "RunSpec",
    "score_rows",
    "evaluate_image_dataset",
    "evaluate_sequence_dataset",
    "perturb_image_dataset",
]

DEFAULT_METRICS = ("mae", "s_measure", "weighted_f", "ber", "iou", "dice")
POOLED_METRICS = ("i_auroc", "i_ap", "p_auroc", "p_ap", "p_pro")

IMAGE_MODES = ("point", "box", "mask", "everything", "icl")
_MODE_CAPABILITY = {
    "point": "points",
    "box": "boxes",
    "mask": "mask",
    "everything": "everything",
    "icl": "context_memory",
}


@dataclass(frozen=True)
class RunSpec:
    """One batch run: which data, which prompting, which segmenter, where to
    write. Compatibility is validated before any inference."""

    dataset_roots: tuple[str, ...]
    kind: str  # "image" | "video" | "volume"
    mode: str
    segmenter: str
    out_dir: str
    config: EvalConfig
    strategy: Optional[str] = None  # video only
    k: int = 1
    metrics: tuple[str, ...] = DEFAULT_METRICS
    train_root: Optional[str] = None  # ICL exemplar source
    limit: Optional[int] = None
    jobs: int = 1
    resimulate_clicks: bool = False

    def validate(self) -> None:
        if self.kind == "image":
            if self.strategy is not None:
                raise ValueError("image datasets take a prompt mode, not a strategy")
            if self.mode not in IMAGE_MODES:
                raise ValueError(f"unknown image mode {self.mode!r}")
            if self.mode == "mask":
                raise ValueError(
                    "mask prompts are reserved for sequence reference frames; "
                    "use point, box, everything, or icl on image data"
                )
            if self.mode == "icl" and not self.train_root:
                raise ValueError("icl mode needs --train-dataset for exemplars")
        elif self.kind == "video":
            if self.strategy is None:
                raise ValueError("video datasets need a strategy")
            if self.strategy == "per_frame_gt" and self.mode not in ("point", "box"):
                raise ValueError("per_frame_gt supports point or box modes")
            if self.strategy == "multiframe" and self.mode not in ("point", "box", "mask"):
                raise ValueError("multiframe supports point, box, or mask modes")
        elif self.kind == "volume":
            if self.strategy is not None:
                raise ValueError("volumes always run bidirectional inference; drop --strategy")
            if self.mode not in ("point", "box", "mask"):
                raise ValueError("volume prompting supports point, box, or mask modes")
        else:
            raise ValueError(f"unknown dataset kind {self.kind!r}")

    def required_capabilities(self) -> set[str]:
        if self.kind == "image":
            return {_MODE_CAPABILITY[self.mode]}
        if self.kind == "volume" or self.strategy == "multiframe":
            return {"context_memory"}
        if self.strategy == "propagated_point":
            return {"points"}
        if self.strategy == "propagated_box":
            return {"boxes"}
        return {_MODE_CAPABILITY[self.mode]}  # per_frame_gt

    def check_capabilities(self, capabilities: frozenset) -> None:
        missing = sorted(n for n in self.required_capabilities() if n not in capabilities)
        if missing:
            raise CapabilityError(
                f"segmenter lacks required capabilities {missing} (has {sorted(capabilities)})"
            )


# --------------------------------------------------------------------------
# scoring
# --------------------------------------------------------------------------

def score_pair(
    pred: BinaryMask, gt: BinaryMask, metric_names: Sequence[str], cfg: EvalConfig
) -> list[MetricValue]:
    scores = pred.to_scores()
    out = []
    for name in metric_names:
        if name == "mae":
            out.append(mae(scores, gt))
        elif name == "s_measure":
            out.append(s_measure(scores, gt, alpha=cfg.s_measure_alpha))
        elif name == "weighted_f":
            out.append(weighted_f_measure(scores, gt, beta2=cfg.wfm_beta2, sigma=cfg.wfm_sigma))
        elif name == "ber":
            out.append(ber(pred, gt))
        elif name == "iou":
            out.append(iou(pred, gt))
        elif name == "dice":
            out.append(dice(pred, gt))
        else:
            raise ValueError(f"unknown per-sample metric {name!r}")
    return out


def pooled_values(
    rows: Sequence[tuple[str, BinaryMask, BinaryMask]],
    metric_names: Sequence[str],
    cfg: EvalConfig,
) -> tuple[list[MetricValue], list[str]]:
    """Dataset-level AUROC/AP/PRO on pooled predictions. Undefined metrics
    become notes, never silent drops."""
    values: list[MetricValue] = []
    notes: list[str] = []
    if not rows or not metric_names:
        return values, notes
    image_scores = [image_anomaly_score(pred.to_scores()) for _, pred, _ in rows]
    image_labels = [0 if gt.is_empty() else 1 for _, _, gt in rows]
    pixel_scores = np.concatenate([pred.bits.ravel() for _, pred, _ in rows]).astype(np.float64)
    pixel_labels = np.concatenate([gt.bits.ravel() for _, _, gt in rows])
    for name in metric_names:
        try:
            if name == "i_auroc":
                values.append(auroc(image_scores, image_labels).renamed(name))
            elif name == "i_ap":
                values.append(average_precision(image_scores, image_labels).renamed(name))
            elif name == "p_auroc":
                values.append(auroc(pixel_scores, pixel_labels).renamed(name))
            elif name == "p_ap":
                values.append(average_precision(pixel_scores, pixel_labels).renamed(name))
            elif name == "p_pro":
                maps = [pred.to_scores() for _, pred, _ in rows]
                gts = [gt for _, _, gt in rows]
                values.append(pro(maps, gts, fpr_cap=cfg.pro_fpr_cap).renamed(name))
            else:
                raise ValueError(f"unknown pooled metric {name!r}")
        except UndefinedMetricError as exc:
            notes.append(f"{name} undefined: {exc}")
    return values, notes


def score_rows(
    rows: Sequence[tuple[str, BinaryMask, BinaryMask]],
    metric_names: Sequence[str],
    cfg: EvalConfig,
    dataset: Optional[str] = None,
    extra_notes: Sequence[str] = (),
) -> MetricReport:
    """Score [(sample_id, prediction, gt)] rows into a full report."""
    per_sample_names = [n for n in metric_names if n in DEFAULT_METRICS]
    pooled_names = [n for n in metric_names if n in POOLED_METRICS]
    unknown = [n for n in metric_names if n not in DEFAULT_METRICS and n not in POOLED_METRICS]
    if unknown:
        raise ValueError(f"unknown metrics requested: {unknown}")
    per_sample = [
        (sid, score_pair(pred, gt, per_sample_names, cfg)) for sid, pred, gt in rows
    ]
    pooled, notes = pooled_values(rows, pooled_names, cfg)
    return MetricReport.build(
        per_sample, dataset=dataset, pooled=pooled, notes=tuple(extra_notes) + tuple(notes)
    )


# --------------------------------------------------------------------------
# image pipeline
# --------------------------------------------------------------------------

def _image_samples(manifest: DatasetManifest, limit: Optional[int]):
    samples = manifest.samples
    return samples[:limit] if limit is not None else samples


def _predict_image(sample, mode: str, handle, cfg: EvalConfig, context):
    gt = load_mask(sample.mask_ref)
    if mode == "icl":
        prompt = Prompt.everything(context=context)
        pred = handle.segment(sample.image_ref, gt.width, gt.height, prompt).best_mask()
        return pred, gt, None
    if gt.is_empty():
        # nothing to derive a prompt from: an empty prediction, no query
        note = f"{sample.sample_id}: empty GT, predicted empty"
        return BinaryMask.zeros(gt.height, gt.width), gt, note
    if mode == "point":
        pred, _ = simulate_clicks(gt, handle, cfg, sample.image_ref)
    elif mode == "box":
        pred = box_prompt_run(gt, handle, sample.image_ref)
    elif mode == "everything":
        pred = everything_run(gt, handle, sample.image_ref, cfg.ofs_threshold)
    else:
        raise ValueError(f"unknown image mode {mode!r}")
    return pred, gt, None


@dataclass
class PipelineResult:
    report: MetricReport
    hard_errors: list[str] = field(default_factory=list)
    sequence_index: list[dict] = field(default_factory=list)


def evaluate_image_dataset(
    manifest: DatasetManifest,
    mode: str,
    handle,
    cfg: EvalConfig,
    metric_names: Sequence[str] = DEFAULT_METRICS,
    limit: Optional[int] = None,
    jobs: int = 1,
    train_pairs: Optional[LazyPairs] = None,
) -> PipelineResult:
    samples = _image_samples(manifest, limit)
    context = tuple(icl_context(train_pairs, cfg.icl_count)) if mode == "icl" else ()
    notes: list[str] = []
    errors: list[str] = []

    def work(sample):
        return _predict_image(sample, mode, handle, cfg, context)

    rows: list[tuple[str, BinaryMask, BinaryMask]] = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = [(s, pool.submit(work, s)) for s in samples]
        for sample, future in futures:
            try:
                pred, gt, note = future.result()
            except TransportError as exc:
                errors.append(f"{sample.sample_id}: {exc}")
                continue
            if note:
                notes.append(note)
            rows.append((sample.sample_id, pred, gt))

    report = score_rows(rows, metric_names, cfg, dataset=manifest.name, extra_notes=notes)
    return PipelineResult(report=report, hard_errors=errors)


# --------------------------------------------------------------------------
# video / volume pipeline
# --------------------------------------------------------------------------

def evaluate_sequence_dataset(
    manifest: DatasetManifest,
    strategy: Optional[str],
    mode: str,
    k: int,
    handle,
    cfg: EvalConfig,
    metric_names: Sequence[str] = DEFAULT_METRICS,
    limit: Optional[int] = None,
    jobs: int = 1,
) -> PipelineResult:
    entries = manifest.sequences[:limit] if limit is not None else manifest.sequences
    notes: list[str] = []
    errors: list[str] = []

    def describe(entry, record) -> dict:
        """Index-manifest entry: strategy, schedule, and (volumes) anchor."""
        info = {
            "sequence": entry.name,
            "n_frames": len(record),
            "strategy": strategy if manifest.kind == "video" else "bidirectional",
            "mode": mode,
            "k": k,
        }
        if manifest.kind == "video" and strategy == "multiframe":
            info["schedule"] = list(multiframe_schedule(len(record), k, mode).prompted_frames)
        if manifest.kind == "volume":
            areas = [gt.foreground_count() for gt in record.gt_masks()]
            info["anchor"] = int(np.argmax(areas))
            info["schedule"] = list(multiframe_schedule(len(record), k, mode).prompted_frames)
        return info

    def work(entry):
        seq = load_sequence(entry, manifest.kind)
        if manifest.kind == "video":
            return entry, run_video(seq, strategy, handle, cfg, mode=mode, k=k)
        return entry, bidirectional_3d(seq, k, mode, handle, cfg)

    rows: list[tuple[str, BinaryMask, BinaryMask]] = []
    sequence_index: list[dict] = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = [pool.submit(work, e) for e in entries]
        for future in futures:
            try:
                entry, predicted = future.result()
            except TransportError as exc:
                partial = len(getattr(exc, "partial_predictions", ()))
                errors.append(f"sequence failed after {partial} frames: {exc}")
                continue
            sequence_index.append(describe(entry, predicted))
            for frame, (_, gt), pred in zip(
                entry.frames, predicted.frames, predicted.predictions
            ):
                rows.append((frame.sample_id, pred, gt))

    report = score_rows(rows, metric_names, cfg, dataset=manifest.name, extra_notes=notes)
    return PipelineResult(report=report, hard_errors=errors, sequence_index=sequence_index)


# --------------------------------------------------------------------------
# perturbation pipeline
# --------------------------------------------------------------------------

def perturb_image_dataset(
    manifest: DatasetManifest,
    mode: str,
    handle,
    cfg: EvalConfig,
    metric_names: Sequence[str] = DEFAULT_METRICS,
    limit: Optional[int] = None,
    resimulate: bool = False,
) -> tuple[list[TrialStats], list[str], MetricReport]:
    """Ideal baseline plus seeded perturbation trials for one image dataset.

    Returns (per-metric trial statistics, perturbation events, the ideal
    baseline report)."""
    if mode not in ("point", "box", "mask"):
        raise ValueError("perturbation supports point, box, and mask prompts")
    samples = _image_samples(manifest, limit)

    perturb_samples: list[PerturbSample] = []
    ideal_rows: list[tuple[str, BinaryMask, BinaryMask]] = []
    for sample in samples:
        gt = load_mask(sample.mask_ref)
        if gt.is_empty():
            ideal_rows.append((sample.sample_id, BinaryMask.zeros(gt.height, gt.width), gt))
            continue
        if mode == "point":
            pred, log = simulate_clicks(gt, handle, cfg, sample.image_ref)
            perturb_samples.append(
                PerturbSample(
                    sample_id=sample.sample_id,
                    image_ref=sample.image_ref,
                    gt=gt,
                    ideal_points=log.points(),
                )
            )
        elif mode == "box":
            pred = box_prompt_run(gt, handle, sample.image_ref)
            perturb_samples.append(
                PerturbSample(
                    sample_id=sample.sample_id,
                    image_ref=sample.image_ref,
                    gt=gt,
                    ideal_boxes=tuple(component_boxes(gt)),
                )
            )
        else:
            result = handle.segment(sample.image_ref, gt.width, gt.height, Prompt.from_mask(gt))
            pred = result.best_mask()
            perturb_samples.append(
                PerturbSample(sample_id=sample.sample_id, image_ref=sample.image_ref, gt=gt)
            )
        ideal_rows.append((sample.sample_id, pred, gt))

    ideal_report = score_rows(ideal_rows, metric_names, cfg, dataset=manifest.name)
    ideal = {mv.name: mv.value for mv in ideal_report.aggregates}

    empties = [
        (sid, pred, gt) for sid, pred, gt in ideal_rows if gt.is_empty()
    ]

    def score_trial(predictions):
        rows = list(predictions) + empties
        rows.sort(key=lambda r: r[0])
        report = score_rows(rows, metric_names, cfg, dataset=manifest.name)
        return report.aggregates

    stats, events = run_trials(
        perturb_samples, mode, handle, score_trial, cfg, ideal, resimulate=resimulate
    )
    return stats, events, ideal_report
