"""Ideal prompt synthesis from ground truth, and the basic prediction modes.

The four modes:

* point — iterative click simulation: each round clicks the pixel farthest
  from the background of the larger current error region (false negatives
  win ties), foreground-labeled in FN, background-labeled in FP, until IoU
  reaches the stop threshold or the click budget runs out;
* box — one tight box per GT connected component, one segmenter query per
  box, predictions merged by pixelwise OR;
* mask — the mask forwarded verbatim (sequence reference frames only);
* everything — the segmenter's entity list filtered by overlap with GT
  (strictly greater than the threshold) and merged by OR.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BinaryMask, EvalConfig, PointPrompt, Prompt
from .errors import EmptyMaskError
from .kernels import component_boxes, distance_to_background, overlap_fraction
from .metrics import iou

__all__ = [
    "ClickLog",
    "farthest_point",
    "simulate_clicks",
    "box_prompt_run",
    "ofs_filter",
    "mask_prompt_run",
    "icl_context",
    "ideal_prompt",
]

STOP_IOU = "iou_reached"
STOP_LIMIT = "click_limit"


@dataclass(frozen=True)
class ClickLog:
    """The click trail of one interactive simulation: each click with the IoU
    measured after the segmenter consumed it, plus why the loop stopped."""

    clicks: tuple[tuple[PointPrompt, float], ...]
    stop_reason: str
    notes: tuple[str, ...] = ()

    def points(self) -> tuple[PointPrompt, ...]:
        return tuple(p for p, _ in self.clicks)

    def final_iou(self) -> float:
        return self.clicks[-1][1] if self.clicks else 0.0


def farthest_point(region: BinaryMask, exclude: Sequence[tuple[int, int]] = ()) -> Optional[PointPrompt]:
    """The region pixel farthest from the background (border counts as
    background), skipping excluded coordinates. Ties resolve to the first
    pixel in row-major order. None if nothing is clickable."""
    dist = np.array(distance_to_background(region))
    for x, y in exclude:
        dist[y, x] = 0.0
    if dist.max() <= 0.0:
        return None
    flat = int(np.argmax(dist))
    y, x = divmod(flat, region.width)
    return PointPrompt(x=x, y=y)


def simulate_clicks(
    gt: BinaryMask,
    seg,
    cfg: EvalConfig,
    image_ref: str,
    click_transform: Optional[Callable[[PointPrompt], PointPrompt]] = None,
) -> tuple[BinaryMask, ClickLog]:
    """Run the interactive click loop against a segmenter.

    The prediction starts empty, so the first error region is the whole GT.
    The accumulated click list is sent on every query. ``click_transform``
    lets callers distort each chosen click before it is sent (robustness
    trials re-simulating the full loop).
    """
    if gt.is_empty():
        raise EmptyMaskError("cannot simulate clicks on an empty ground truth")
    pred = BinaryMask.zeros(gt.height, gt.width)
    clicks: list[PointPrompt] = []
    log: list[tuple[PointPrompt, float]] = []
    notes: list[str] = []
    stop_reason = STOP_LIMIT
    while len(clicks) < cfg.click_limit:
        fp = pred - gt
        fn = gt - pred
        if fn.foreground_count() >= fp.foreground_count():
            region, label = fn, 1
        else:
            region, label = fp, 0
        taken = [(p.x, p.y) for p in clicks]
        chosen = farthest_point(region, exclude=taken)
        if chosen is None:
            notes.append("no unclicked pixel left in the error region")
            break
        click = PointPrompt(x=chosen.x, y=chosen.y, label=label)
        if click_transform is not None:
            click = click_transform(click)
        clicks.append(click)
        pred = seg.segment(image_ref, gt.width, gt.height, Prompt.from_points(clicks)).best_mask()
        iou_now = iou(pred, gt).value
        log.append((click, iou_now))
        if iou_now >= cfg.iou_stop:
            stop_reason = STOP_IOU
            break
    return pred, ClickLog(clicks=tuple(log), stop_reason=stop_reason, notes=tuple(notes))


def box_prompt_run(gt: BinaryMask, seg, image_ref: str) -> BinaryMask:
    """One box per GT connected component, one query per box, OR of results."""
    if gt.is_empty():
        raise EmptyMaskError("cannot derive box prompts from an empty ground truth")
    pred = BinaryMask.zeros(gt.height, gt.width)
    for box in component_boxes(gt):
        result = seg.segment(image_ref, gt.width, gt.height, Prompt.from_boxes([box]))
        pred = pred | result.best_mask()
    return pred


def ofs_filter(entities: Sequence[BinaryMask], gt: BinaryMask, threshold: float) -> BinaryMask:
    """Overlap filtering: keep entities lying strictly more than ``threshold``
    inside the GT, merged by OR. Empty entities are never retained."""
    out = BinaryMask.zeros(gt.height, gt.width)
    for entity in entities:
        if entity.is_empty():
            continue
        if overlap_fraction(entity, gt) > threshold:
            out = out | entity
    return out


def everything_run(gt: BinaryMask, seg, image_ref: str, threshold: float) -> BinaryMask:
    """Automatic mode: ask for all entities, then overlap-filter against GT."""
    result = seg.segment(image_ref, gt.width, gt.height, Prompt.everything())
    return ofs_filter(result.entities, gt, threshold)


def mask_prompt_run(prompt_mask: BinaryMask, seg, image_ref: str) -> BinaryMask:
    """Forward a mask prompt verbatim; meaningful only on sequence reference
    frames, which the temporal layer enforces."""
    if prompt_mask.is_empty():
        raise EmptyMaskError("mask prompts must be nonempty")
    result = seg.segment(
        image_ref, prompt_mask.width, prompt_mask.height, Prompt.from_mask(prompt_mask)
    )
    return result.best_mask()


def icl_context(train_set: Sequence[tuple[str, BinaryMask]], k: int) -> list[tuple[str, BinaryMask]]:
    """The first ``k`` samples of the training set, in native dataset order,
    paired with their GT masks."""
    if k < 1:
        raise ValueError("exemplar count must be >= 1")
    if len(train_set) < k:
        raise ValueError(f"training set has {len(train_set)} samples, need {k}")
    return [train_set[i] for i in range(k)]


def ideal_prompt(gt: BinaryMask, mode: str) -> Prompt:
    """A single-shot ideal prompt of the given mode derived from GT: the
    farthest-from-background point, the per-component boxes, or the mask."""
    if gt.is_empty():
        raise EmptyMaskError("cannot derive a prompt from an empty ground truth")
    if mode == "point":
        return Prompt.from_points([farthest_point(gt)])
    if mode == "box":
        return Prompt.from_boxes(component_boxes(gt))
    if mode == "mask":
        return Prompt.from_mask(gt)
    raise ValueError(f"unknown prompt mode {mode!r}")
