"""Seeded random prompt perturbations and repeat-trial statistics.

Perturbations mirror real-world imperfect prompts: clicks shifted by up to
10 pixels per axis, box edges shifted by up to 10% of the box's shorter
side, masks eroded or dilated by 1..5 iterations. Each (trial, sample) pair
gets its own deterministic RNG substream derived from the run seed, so
results are independent of worker scheduling, and identical seeds reproduce
identical statistics byte for byte.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BinaryMask, BoxPrompt, EvalConfig, PointPrompt, Prompt
from .errors import EmptyMaskError
from .kernels import component_boxes, morph
from .metrics import MetricValue
from .prompts import simulate_clicks

__all__ = [
    "TrialStats",
    "POINT_MAX_SHIFT",
    "trial_rng",
    "jitter_point",
    "jitter_box",
    "morph_perturb_mask",
    "run_trials",
]

POINT_MAX_SHIFT = 10
BOX_EDGE_FRACTION = 0.10
MORPH_MAX_ITERATIONS = 5


@dataclass(frozen=True)
class TrialStats:
    """Repeat-trial summary for one metric: mean and population std across
    trials, and the signed relative change against the ideal-prompt baseline
    (None when the ideal value is 0)."""

    metric: str
    mean: float
    std: float
    n_trials: int
    ideal: float
    delta_vs_ideal: Optional[float]

    def __post_init__(self):
        if self.std < 0 or self.n_trials < 1:
            raise ValueError("std must be >= 0 and n_trials >= 1")
        if not (math.isfinite(self.mean) and math.isfinite(self.std)):
            raise ValueError("trial statistics must be finite")


def trial_rng(seed: int, trial: int, sample_id: str) -> np.random.Generator:
    """Deterministic substream for one (trial, sample) cell, independent of
    process or thread scheduling."""
    digest = hashlib.blake2s(sample_id.encode("utf-8"), digest_size=8).digest()
    sample_words = (
        int.from_bytes(digest[:4], "little"),
        int.from_bytes(digest[4:], "little"),
    )
    seq = np.random.SeedSequence(entropy=seed % 2**64, spawn_key=(trial, *sample_words))
    return np.random.Generator(np.random.PCG64(seq))


def jitter_point(
    p: PointPrompt,
    width: int,
    height: int,
    rng: np.random.Generator,
    max_shift: int = POINT_MAX_SHIFT,
) -> PointPrompt:
    """Shift each coordinate by an independent uniform integer offset of
    magnitude at most ``max_shift``, clamped to the image; label unchanged."""
    dx = int(rng.integers(-max_shift, max_shift + 1))
    dy = int(rng.integers(-max_shift, max_shift + 1))
    x = min(max(p.x + dx, 0), width - 1)
    y = min(max(p.y + dy, 0), height - 1)
    return PointPrompt(x=x, y=y, label=p.label)


def jitter_box(
    b: BoxPrompt,
    width: int,
    height: int,
    rng: np.random.Generator,
    events: Optional[list] = None,
) -> BoxPrompt:
    """Shift each edge by an independent uniform integer offset of magnitude
    at most floor(10% of the shorter side), clamped into the image. If the
    box degenerates, the minimal 1-pixel extent is restored and the event is
    recorded in ``events``."""
    m = int(BOX_EDGE_FRACTION * b.shorter_side())
    dx0, dy0, dx1, dy1 = (int(v) for v in rng.integers(-m, m + 1, size=4))
    x_min = min(max(b.x_min + dx0, 0), width - 1)
    y_min = min(max(b.y_min + dy0, 0), height - 1)
    x_max = min(max(b.x_max + dx1, 1), width)
    y_max = min(max(b.y_max + dy1, 1), height)
    degenerate = x_min >= x_max or y_min >= y_max
    if x_min >= x_max:
        x_max = x_min + 1
        if x_max > width:
            x_min, x_max = width - 1, width
    if y_min >= y_max:
        y_max = y_min + 1
        if y_max > height:
            y_min, y_max = height - 1, height
    if degenerate and events is not None:
        events.append(f"degenerate box restored to 1-pixel extent at ({x_min},{y_min})")
    return BoxPrompt(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


def morph_perturb_mask(
    m: BinaryMask,
    rng: np.random.Generator,
    events: Optional[list] = None,
) -> BinaryMask:
    """Erode or dilate (uniform choice) by a uniform 1..5 iterations. If
    erosion empties the mask, the unperturbed mask is returned and the event
    recorded."""
    if m.is_empty():
        raise EmptyMaskError("cannot perturb an empty mask prompt")
    op = "erode" if int(rng.integers(0, 2)) == 0 else "dilate"
    iterations = int(rng.integers(1, MORPH_MAX_ITERATIONS + 1))
    out = morph(m, op, iterations)
    if out.is_empty():
        if events is not None:
            events.append(f"erosion x{iterations} emptied the mask; kept the unperturbed prompt")
        return m
    return out


# --------------------------------------------------------------------------
# repeat trials
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbSample:
    """One evaluation unit for robustness trials: the sample, its GT, and the
    ideal prompt artifacts recorded from the baseline run."""

    sample_id: str
    image_ref: str
    gt: BinaryMask
    ideal_points: tuple[PointPrompt, ...] = ()
    ideal_boxes: tuple[BoxPrompt, ...] = ()


def _perturbed_prediction(
    sample: PerturbSample,
    prompt_mode: str,
    seg,
    cfg: EvalConfig,
    rng: np.random.Generator,
    events: list,
    resimulate: bool,
) -> BinaryMask:
    gt = sample.gt
    if prompt_mode == "point":
        if resimulate:
            transform = lambda p: jitter_point(p, gt.width, gt.height, rng)
            pred, _ = simulate_clicks(gt, seg, cfg, sample.image_ref, click_transform=transform)
            return pred
        points = [jitter_point(p, gt.width, gt.height, rng) for p in sample.ideal_points]
        result = seg.segment(sample.image_ref, gt.width, gt.height, Prompt.from_points(points))
        return result.best_mask()
    if prompt_mode == "box":
        pred = BinaryMask.zeros(gt.height, gt.width)
        boxes = sample.ideal_boxes or tuple(component_boxes(gt))
        for box in boxes:
            jittered = jitter_box(box, gt.width, gt.height, rng, events=events)
            result = seg.segment(sample.image_ref, gt.width, gt.height, Prompt.from_boxes([jittered]))
            pred = pred | result.best_mask()
        return pred
    if prompt_mode == "mask":
        perturbed = morph_perturb_mask(gt, rng, events=events)
        result = seg.segment(sample.image_ref, gt.width, gt.height, Prompt.from_mask(perturbed))
        return result.best_mask()
    raise ValueError(f"unknown perturbation mode {prompt_mode!r}")


def run_trials(
    samples: Sequence[PerturbSample],
    prompt_mode: str,
    seg,
    score_samples: Callable[[Sequence[tuple[str, BinaryMask, BinaryMask]]], Sequence[MetricValue]],
    cfg: EvalConfig,
    ideal: dict[str, float],
    resimulate: bool = False,
) -> tuple[list[TrialStats], list[str]]:
    """Evaluate the sample set under ``cfg.n_trials`` seeded perturbation
    rounds and summarize each metric against its ideal-prompt baseline.

    ``score_samples`` maps [(sample_id, prediction, gt)] to the dataset-level
    MetricValues for one trial; ``ideal`` holds the baseline value per metric
    name. Per-trial RNG substreams depend only on (seed, trial, sample id).
    """
    events: list[str] = []
    per_metric: dict[str, list[float]] = {name: [] for name in ideal}
    for trial in range(1, cfg.n_trials + 1):
        predictions = []
        for sample in samples:
            rng = trial_rng(cfg.rng_seed, trial, sample.sample_id)
            trial_events: list[str] = []
            pred = _perturbed_prediction(
                sample, prompt_mode, seg, cfg, rng, trial_events, resimulate
            )
            events.extend(f"trial {trial} {sample.sample_id}: {e}" for e in trial_events)
            predictions.append((sample.sample_id, pred, sample.gt))
        for value in score_samples(predictions):
            if value.name in per_metric:
                per_metric[value.name].append(value.value)
    stats = []
    for name, values in per_metric.items():
        arr = np.asarray(values, dtype=np.float64)
        mean = float(arr.mean())
        std = float(arr.std(ddof=0))
        base = ideal[name]
        delta = (mean - base) / abs(base) if base != 0 else None
        stats.append(
            TrialStats(
                metric=name,
                mean=mean,
                std=std,
                n_trials=cfg.n_trials,
                ideal=base,
                delta_vs_ideal=delta,
            )
        )
    return stats, events
