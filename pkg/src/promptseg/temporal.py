"""Video and volume orchestration: per-frame prompting, propagated prompts,
multi-frame prompt schedules, and bidirectional volume inference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BinaryMask, EvalConfig, Prompt, SequenceRecord
from .errors import EmptyMaskError, TransportError
from .kernels import component_boxes
from .prompts import box_prompt_run, farthest_point, ideal_prompt, simulate_clicks

__all__ = [
    "PromptSchedule",
    "multiframe_schedule",
    "propagate_prompt",
    "run_video",
    "bidirectional_3d",
    "VIDEO_STRATEGIES",
]

VIDEO_STRATEGIES = ("per_frame_gt", "propagated_point", "propagated_box", "multiframe")
MULTIFRAME_COUNTS = (1, 3, 5)


@dataclass(frozen=True)
class PromptSchedule:
    """Which frames receive GT-derived prompts, and in what mode. Frame 0 is
    always prompted; indices are strictly increasing."""

    prompted_frames: tuple[int, ...]
    mode: str  # "point" | "box" | "mask"

    def __post_init__(self):
        frames = tuple(int(i) for i in self.prompted_frames)
        if not frames or frames[0] != 0:
            raise ValueError("schedule must start at frame 0")
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("schedule indices must be strictly increasing")
        if any(i < 0 for i in frames):
            raise ValueError("schedule indices must be nonnegative")
        if self.mode not in ("point", "box", "mask"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        object.__setattr__(self, "prompted_frames", frames)

    @property
    def k(self) -> int:
        return len(self.prompted_frames)


def multiframe_schedule(seq_len: int, k: int, mode: str = "point") -> PromptSchedule:
    """Frame 0 plus the floor(seq_len * i / k) fractional positions for
    i = 1..k-1; collisions shift to the next free index."""
    if k not in MULTIFRAME_COUNTS:
        raise ValueError(f"k must be one of {MULTIFRAME_COUNTS}, got {k}")
    if seq_len < k:
        raise ValueError(f"sequence of length {seq_len} cannot take {k} prompts")
    chosen: list[int] = []
    for idx in [0] + [seq_len * i // k for i in range(1, k)]:
        while idx in chosen:
            idx += 1
        if idx >= seq_len:
            raise ValueError("collision shifting ran past the sequence end")
        chosen.append(idx)
    return PromptSchedule(prompted_frames=tuple(sorted(chosen)), mode=mode)


def propagate_prompt(prev_pred: BinaryMask, mode: str, fallback: Prompt) -> Prompt:
    """Prompt for the next frame derived from the previous prediction: its
    farthest-from-background point, or its per-component boxes. An empty
    prediction falls back to the supplied prompt (the last non-empty
    propagated prompt, else the sequence's initial GT-based prompt)."""
    if prev_pred.is_empty():
        return fallback
    if mode == "point":
        return Prompt.from_points([farthest_point(prev_pred)])
    if mode == "box":
        return Prompt.from_boxes(component_boxes(prev_pred))
    raise ValueError(f"propagated prompts support 'point' or 'box', got {mode!r}")


def _frame_prompt(gt: BinaryMask, mode: str, frame_label: str) -> Prompt:
    if gt.is_empty():
        raise EmptyMaskError(f"prompted frame {frame_label} has an empty ground truth")
    return ideal_prompt(gt, mode)


def _attach_partial(exc: TransportError, predictions: list[BinaryMask]) -> TransportError:
    exc.partial_predictions = tuple(predictions)
    return exc


def run_video(
    seq: SequenceRecord,
    strategy: str,
    seg,
    cfg: EvalConfig,
    mode: str = "point",
    k: int = 1,
) -> SequenceRecord:
    """Predict every frame of a video under one prompting strategy.

    ``per_frame_gt`` prompts each frame independently from its own GT (the
    full click loop for points, component boxes for boxes); frames with empty
    GT yield empty predictions without a query. ``propagated_*`` prompts
    frame 0 from GT and later frames from the previous prediction, one query
    per frame. ``multiframe`` derives GT prompts on the scheduled frames and
    asks a temporally-capable segmenter to fill the rest in one request.
    """
    if seq.kind != "video":
        raise ValueError(f"run_video needs a video sequence, got kind {seq.kind!r}")
    if strategy not in VIDEO_STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {VIDEO_STRATEGIES}")
    height, width = seq.shape
    refs = seq.refs()
    gts = seq.gt_masks()
    predictions: list[BinaryMask] = []

    if strategy == "per_frame_gt":
        if mode not in ("point", "box"):
            raise ValueError("per-frame prompting supports 'point' or 'box' modes")
        try:
            for ref, gt in zip(refs, gts):
                if gt.is_empty():
                    predictions.append(BinaryMask.zeros(height, width))
                elif mode == "point":
                    pred, _ = simulate_clicks(gt, seg, cfg, ref)
                    predictions.append(pred)
                else:
                    predictions.append(box_prompt_run(gt, seg, ref))
        except TransportError as exc:
            raise _attach_partial(exc, predictions)
        return seq.with_predictions(predictions)

    if strategy in ("propagated_point", "propagated_box"):
        prop_mode = "point" if strategy == "propagated_point" else "box"
        initial = _frame_prompt(gts[0], prop_mode, refs[0])
        fallback = initial
        try:
            first = seg.segment(refs[0], width, height, initial).best_mask()
            predictions.append(first)
            for ref in refs[1:]:
                prompt = propagate_prompt(predictions[-1], prop_mode, fallback)
                if not predictions[-1].is_empty():
                    fallback = prompt
                predictions.append(seg.segment(ref, width, height, prompt).best_mask())
        except TransportError as exc:
            raise _attach_partial(exc, predictions)
        return seq.with_predictions(predictions)

    # multiframe
    schedule = multiframe_schedule(len(seq), k, mode)
    prompts = {
        idx: _frame_prompt(gts[idx], mode, refs[idx]) for idx in schedule.prompted_frames
    }
    masks = seg.segment_sequence(refs, width, height, schedule.prompted_frames, prompts)
    return seq.with_predictions(masks)


def bidirectional_3d(
    vol: SequenceRecord,
    k: int,
    mode: str,
    seg,
    cfg: Optional[EvalConfig] = None,
) -> SequenceRecord:
    """Predict every slice of a volume by anchoring at the largest-foreground
    slice and running the two halves as independent sequences that share the
    anchor as their starting frame.

    Extra prompt indices for k > 1 come from the full-volume schedule and are
    applied inside whichever half contains them; scheduled slices with empty
    GT are skipped (their prompt would be undefined). The anchor prediction
    is taken from the forward half.
    """
    if vol.kind != "volume":
        raise ValueError(f"bidirectional_3d needs a volume, got kind {vol.kind!r}")
    areas = np.array([gt.foreground_count() for gt in vol.gt_masks()])
    if areas.max() == 0:
        raise EmptyMaskError("volume has no foreground in any slice")
    anchor = int(np.argmax(areas))  # first max wins ties: lowest index

    height, width = vol.shape
    refs = vol.refs()
    gts = vol.gt_masks()
    full_schedule = multiframe_schedule(len(vol), k, mode).prompted_frames

    def run_half(indices: list[int]) -> list[BinaryMask]:
        half_refs = [refs[i] for i in indices]
        positions = {0}
        positions.update(
            indices.index(i) for i in full_schedule if i in indices[1:]
        )
        prompted = []
        for pos in sorted(positions):
            if pos == 0 or not gts[indices[pos]].is_empty():
                prompted.append(pos)
        prompts = {
            pos: _frame_prompt(gts[indices[pos]], mode, refs[indices[pos]])
            for pos in prompted
        }
        return seg.segment_sequence(half_refs, width, height, prompted, prompts)

    backward_indices = list(range(anchor, -1, -1))
    forward_indices = list(range(anchor, len(vol)))
    backward = run_half(backward_indices)
    forward = run_half(forward_indices)

    predictions: list[Optional[BinaryMask]] = [None] * len(vol)
    for pos, vol_idx in enumerate(backward_indices):
        predictions[vol_idx] = backward[pos]
    for pos, vol_idx in enumerate(forward_indices):
        predictions[vol_idx] = forward[pos]  # anchor comes from the forward pass
    return vol.with_predictions(predictions)
