"""Mask-quality metrics and report aggregation.

Per-sample metrics (MAE, S-measure, weighted F-measure, BER, IoU, Dice) score
one prediction against one ground truth. Pooled metrics (AUROC, AP, PRO) score
a whole collection at once, because they sweep thresholds over the pooled
score distribution.

Semantics pinned here once:

* S-measure follows the reference structure-measure semantics: alpha-blend of
  object- and region-aware scores, degenerate rules ``Sm = 1 - mean(pred)``
  for empty GT and ``Sm = mean(pred)`` for full GT, final clamp at 0.
* Weighted F-measure uses a 7x7 Gaussian dependency window and an exponential
  importance falloff, both parameterized by ``sigma``; empty-GT samples score
  0 and carry an ``empty_gt`` flag.
* BER rates with a zero denominator contribute 0, so all-foreground and
  all-background frames stay scoreable.
* AUROC uses midranks for ties; AP is the step-sum of precision over recall
  increments at distinct score values; PRO integrates the step curve of mean
  per-region recall against pooled FPR up to ``fpr_cap``, normalized by the
  cap (a constant score map scores 0, a perfect one scores 1).
* Both-empty IoU and Dice are 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .core import BinaryMask, ScoreMap, require_same_shape
from .errors import DimensionMismatchError, UndefinedMetricError
from .kernels import connected_components, nearest_foreground

__all__ = [
    "MetricValue",
    "MetricReport",
    "POLARITY",
    "HIGHER_BETTER",
    "LOWER_BETTER",
    "mae",
    "s_measure",
    "weighted_f_measure",
    "ber",
    "iou",
    "dice",
    "auroc",
    "average_precision",
    "pro",
    "image_anomaly_score",
    "aggregate",
]

_EPS = float(np.spacing(1))

HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"

POLARITY: dict[str, str] = {
    "mae": LOWER_BETTER,
    "ber": LOWER_BETTER,
    "s_measure": HIGHER_BETTER,
    "weighted_f": HIGHER_BETTER,
    "iou": HIGHER_BETTER,
    "dice": HIGHER_BETTER,
    "auroc": HIGHER_BETTER,
    "ap": HIGHER_BETTER,
    "pro": HIGHER_BETTER,
    "i_auroc": HIGHER_BETTER,
    "i_ap": HIGHER_BETTER,
    "p_auroc": HIGHER_BETTER,
    "p_ap": HIGHER_BETTER,
    "p_pro": HIGHER_BETTER,
}


def polarity_of(name: str) -> str:
    try:
        return POLARITY[name]
    except KeyError:
        raise KeyError(f"unknown metric {name!r}") from None


@dataclass(frozen=True)
class MetricValue:
    """One scored metric: finite value plus its preferred direction."""

    name: str
    value: float
    polarity: str
    flag: Optional[str] = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"metric {self.name} produced non-finite value {self.value}")
        if self.polarity not in (HIGHER_BETTER, LOWER_BETTER):
            raise ValueError(f"bad polarity {self.polarity!r}")

    def renamed(self, name: str) -> "MetricValue":
        return replace(self, name=name)


def _value(name: str, value: float, flag: Optional[str] = None) -> MetricValue:
    return MetricValue(name=name, value=float(value), polarity=polarity_of(name), flag=flag)


def _scores(pred: Union[ScoreMap, BinaryMask]) -> np.ndarray:
    if isinstance(pred, BinaryMask):
        return pred.bits.astype(np.float64)
    return pred.scores


# --------------------------------------------------------------------------
# per-sample metrics
# --------------------------------------------------------------------------

def mae(pred: Union[ScoreMap, BinaryMask], gt: BinaryMask) -> MetricValue:
    """Pixel-wise mean absolute difference between prediction and GT."""
    p = _scores(pred)
    require_same_shape(pred, gt)
    g = gt.bits.astype(np.float64)
    return _value("mae", float(np.mean(np.abs(p - g))))


def s_measure(pred: Union[ScoreMap, BinaryMask], gt: BinaryMask, alpha: float = 0.5) -> MetricValue:
    """Structural similarity between a soft prediction and a binary GT."""
    p = _scores(pred)
    require_same_shape(pred, gt)
    g = gt.bits
    y = g.mean()
    if y == 0.0:
        sm = 1.0 - p.mean()
    elif y == 1.0:
        sm = float(p.mean())
    else:
        sm = alpha * _s_object(p, g) + (1.0 - alpha) * _s_region(p, g)
        sm = max(0.0, sm)
    return _value("s_measure", sm)


def _region_stats(values: np.ndarray) -> tuple[float, float]:
    """Mean and sample std; a single-element region has std 0."""
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return x, sigma


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    fg = pred * gt
    bg = (1.0 - pred) * (1.0 - gt)
    u = float(gt.mean())
    return u * _object_score(fg, gt) + (1.0 - u) * _object_score(bg, ~gt)


def _object_score(pred: np.ndarray, region: np.ndarray) -> float:
    x, sigma = _region_stats(pred[region])
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    cx, cy = _gt_centroid(gt)
    h, w = gt.shape
    area = h * w
    total = 0.0
    weights = _quadrant_weights(cx, cy, w, h)
    for (rs, re, cs, ce), wt in zip(_quadrant_slices(cx, cy, w, h), weights):
        total += wt * _ssim(pred[rs:re, cs:ce], gt[rs:re, cs:ce].astype(np.float64))
    return total


def _gt_centroid(gt: np.ndarray) -> tuple[int, int]:
    # 1-based split coordinate so the centroid pixel lands in the top-left
    # quadrant, matching the reference toolkit convention.
    ys, xs = np.nonzero(gt)
    cy = int(np.round(ys.mean())) + 1
    cx = int(np.round(xs.mean())) + 1
    return cx, cy


def _quadrant_slices(cx: int, cy: int, w: int, h: int):
    return (
        (0, cy, 0, cx),
        (0, cy, cx, w),
        (cy, h, 0, cx),
        (cy, h, cx, w),
    )


def _quadrant_weights(cx: int, cy: int, w: int, h: int) -> tuple[float, float, float, float]:
    area = float(w * h)
    w1 = cx * cy / area
    w2 = cy * (w - cx) / area
    w3 = (h - cy) * cx / area
    return (w1, w2, w3, 1.0 - w1 - w2 - w3)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 1.0
    x = float(pred.mean())
    y = float(gt.mean())
    if n > 1:
        sigma_x = float(np.sum((pred - x) ** 2)) / (n - 1)
        sigma_y = float(np.sum((gt - y) ** 2)) / (n - 1)
        sigma_xy = float(np.sum((pred - x) * (gt - y))) / (n - 1)
    else:
        sigma_x = sigma_y = sigma_xy = 0.0
    num = 4.0 * x * y * sigma_xy
    den = (x * x + y * y) * (sigma_x + sigma_y)
    if num != 0.0:
        return num / (den + _EPS)
    return 1.0 if den == 0.0 else 0.0


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half : half + 1, -half : half + 1]
    k = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    k[k < np.finfo(k.dtype).eps * k.max()] = 0.0
    return k / k.sum()


def weighted_f_measure(
    pred: Union[ScoreMap, BinaryMask],
    gt: BinaryMask,
    beta2: float = 1.0,
    sigma: int = 5,
) -> MetricValue:
    """F-measure with errors weighted by how close they sit to the GT region.

    Errors outside the GT inherit the error of the nearest GT pixel before a
    Gaussian smoothing inside the GT, and are down-weighted with distance.
    """
    p = _scores(pred)
    require_same_shape(pred, gt)
    g = gt.bits
    if not g.any():
        return _value("weighted_f", 0.0, flag="empty_gt")
    g01 = g.astype(np.float64)

    dist, near_y, near_x = nearest_foreground(gt)
    err = np.abs(p - g01)
    err_t = err.copy()
    bg = ~g
    err_t[bg] = err[near_y[bg], near_x[bg]]

    kernel = _gaussian_kernel(7, float(sigma))
    err_smooth = ndimage.convolve(err_t, kernel, mode="constant", cval=0.0)
    min_err = np.where(g & (err_smooth < err), err_smooth, err)

    importance = np.where(bg, 2.0 - np.exp(np.log(0.5) / float(sigma) * dist), 1.0)
    weighted_err = min_err * importance

    gt_area = float(g01.sum())
    tp_w = gt_area - float(weighted_err[g].sum())
    fp_w = float(weighted_err[bg].sum())
    recall = 1.0 - float(weighted_err[g].mean())
    precision = tp_w / (tp_w + fp_w + _EPS)
    f = (1.0 + beta2) * recall * precision / (recall + beta2 * precision + _EPS)
    return _value("weighted_f", f)


def _confusion(pred: BinaryMask, gt: BinaryMask) -> tuple[int, int, int, int]:
    require_same_shape(pred, gt)
    p, g = pred.bits, gt.bits
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return tp, fp, fn, tn


def ber(pred: BinaryMask, gt: BinaryMask) -> MetricValue:
    """Balanced error rate: mean of FPR and FNR; empty-class rates count 0."""
    tp, fp, fn, tn = _confusion(pred, gt)
    fpr = fp / (fp + tn) if (fp + tn) > 0 else 0.0
    fnr = fn / (fn + tp) if (fn + tp) > 0 else 0.0
    return _value("ber", (fpr + fnr) / 2.0)


def iou(pred: BinaryMask, gt: BinaryMask) -> MetricValue:
    tp, fp, fn, _ = _confusion(pred, gt)
    union = tp + fp + fn
    return _value("iou", 1.0 if union == 0 else tp / union)


def dice(pred: BinaryMask, gt: BinaryMask) -> MetricValue:
    tp, fp, fn, _ = _confusion(pred, gt)
    total = 2 * tp + fp + fn
    return _value("dice", 1.0 if total == 0 else 2 * tp / total)


# --------------------------------------------------------------------------
# pooled ranking metrics
# --------------------------------------------------------------------------

def _as_arrays(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise DimensionMismatchError(f"{s.size} scores vs {y.size} labels")
    if s.size == 0:
        raise UndefinedMetricError("no scores given")
    return s, y


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average of 1-based ranks
        i = j + 1
    return ranks


def auroc(scores: Sequence[float], labels: Sequence[int]) -> MetricValue:
    """Rank-based area under the ROC curve, ties handled by midranks."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative label")
    ranks = _midranks(s)
    auc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return _value("auroc", auc)


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> MetricValue:
    """Sum over recall steps of precision, evaluated at distinct score values."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AP needs at least one positive label")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order].astype(np.float64)
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1.0 - y_sorted)
    # keep only the last index of each distinct score (threshold boundaries)
    boundary = np.flatnonzero(np.diff(s_sorted) != 0.0)
    boundary = np.concatenate([boundary, [s_sorted.size - 1]])
    tp, fp = tp[boundary], fp[boundary]
    recall = tp / n_pos
    precision = tp / (tp + fp)
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    ap = float(np.sum((recall - prev_recall) * precision))
    return _value("ap", ap)


def image_anomaly_score(score_map: ScoreMap) -> float:
    """Image-level anomaly score derived from a pixel map: the max pixel score."""
    return score_map.max_score()


def _count_greater(sorted_asc: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """How many elements of a sorted array are strictly greater than each threshold."""
    return sorted_asc.size - np.searchsorted(sorted_asc, thresholds, side="right")


def pro_curve(
    score_maps: Sequence[ScoreMap],
    gts: Sequence[BinaryMask],
) -> tuple[np.ndarray, np.ndarray]:
    """Pooled (FPR, mean per-region recall) curve over descending thresholds.

    One point per distinct score value (binarizing at score > t), plus a final
    all-foreground point; FPR is nondecreasing along the curve.
    """
    if len(score_maps) != len(gts) or len(gts) == 0:
        raise DimensionMismatchError("score maps and GT lists must align and be nonempty")
    neg_scores = []
    component_scores: list[np.ndarray] = []
    all_scores = []
    for sm, gt in zip(score_maps, gts):
        require_same_shape(sm, gt)
        all_scores.append(sm.scores.ravel())
        neg_scores.append(sm.scores[~gt.bits])
        comps = connected_components(gt, connectivity=8)
        for k in range(1, comps.count + 1):
            component_scores.append(np.sort(sm.scores[comps.label_map == k]))
    if not component_scores:
        raise UndefinedMetricError("PRO needs at least one anomalous region")
    neg = np.sort(np.concatenate(neg_scores))
    if neg.size == 0:
        raise UndefinedMetricError("PRO needs at least one normal pixel")

    thresholds = np.unique(np.concatenate(all_scores))[::-1]
    fpr = _count_greater(neg, thresholds) / neg.size
    recall_sum = np.zeros(thresholds.size, dtype=np.float64)
    for comp in component_scores:
        recall_sum += _count_greater(comp, thresholds) / comp.size
    mean_recall = recall_sum / len(component_scores)

    fpr = np.concatenate([fpr, [1.0]])
    mean_recall = np.concatenate([mean_recall, [1.0]])
    return fpr, mean_recall


def integrate_to_cap(fpr: np.ndarray, value: np.ndarray, cap: float) -> float:
    """Area under the step curve on [0, cap], normalized by cap.

    The threshold sweep yields a piecewise-constant curve: between measured
    FPR points the value holds at the higher-threshold reading (no ROC-style
    linear interpolation, which would invent area for uninformative score
    maps). The curve must start at fpr 0 and reach fpr >= cap."""
    if not 0.0 < cap <= 1.0:
        raise ValueError(f"cap must be in (0, 1], got {cap}")
    area = 0.0
    for i in range(1, fpr.size):
        f0, f1 = float(fpr[i - 1]), float(fpr[i])
        if f0 >= cap:
            break
        area += float(value[i - 1]) * (min(f1, cap) - f0)
    return area / cap


def pro(
    score_maps: Sequence[ScoreMap],
    gts: Sequence[BinaryMask],
    fpr_cap: float = 0.3,
) -> MetricValue:
    """Per-region overlap: mean per-component recall integrated over pooled
    FPR up to ``fpr_cap`` and normalized by the cap."""
    fpr, mean_recall = pro_curve(score_maps, gts)
    return _value("pro", integrate_to_cap(fpr, mean_recall, fpr_cap))


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricReport:
    """Per-sample metric values plus per-metric aggregates for one grouping."""

    per_sample: tuple[tuple[str, tuple[MetricValue, ...]], ...]
    aggregates: tuple[MetricValue, ...]
    dataset: Optional[str] = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [sid for sid, _ in self.per_sample]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate sample ids in report")

    def aggregate_value(self, name: str) -> float:
        for mv in self.aggregates:
            if mv.name == name:
                return mv.value
        raise KeyError(f"no aggregate for metric {name!r}")

    def metric_names(self) -> tuple[str, ...]:
        return tuple(mv.name for mv in self.aggregates)

    @staticmethod
    def build(
        per_sample: Iterable[tuple[str, Iterable[MetricValue]]],
        dataset: Optional[str] = None,
        pooled: Iterable[MetricValue] = (),
        notes: Iterable[str] = (),
    ) -> "MetricReport":
        """Aggregate per-sample values (arithmetic mean per metric, in first-
        appearance order) and append pooled dataset-level values."""
        rows = tuple((str(sid), tuple(vals)) for sid, vals in per_sample)
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}
        order: list[str] = []
        for _, vals in rows:
            for mv in vals:
                if mv.name not in sums:
                    sums[mv.name] = 0.0
                    counts[mv.name] = 0
                    order.append(mv.name)
                sums[mv.name] += mv.value
                counts[mv.name] += 1
        aggregates = [
            MetricValue(name=n, value=sums[n] / counts[n], polarity=polarity_of(n))
            for n in order
        ]
        aggregates.extend(pooled)
        return MetricReport(
            per_sample=rows,
            aggregates=tuple(aggregates),
            dataset=dataset,
            notes=tuple(notes),
        )


def aggregate(reports: Sequence[MetricReport], scheme: str) -> Union[list[MetricReport], MetricReport]:
    """Combine reports: ``per_dataset_mean`` re-averages each dataset on its
    own; ``cross_dataset_mean`` averages the dataset means with equal weight
    per dataset, regardless of dataset sizes."""
    if not reports:
        raise ValueError("no reports to aggregate")
    if scheme == "per_dataset_mean":
        return [
            MetricReport.build(
                r.per_sample,
                dataset=r.dataset,
                pooled=[mv for mv in r.aggregates if _is_pooled(mv, r)],
                notes=r.notes,
            )
            for r in reports
        ]
    if scheme != "cross_dataset_mean":
        raise ValueError(f"unknown aggregation scheme {scheme!r}")
    names = reports[0].metric_names()
    for r in reports[1:]:
        if r.metric_names() != names:
            raise ValueError(
                f"metric sets differ across datasets: {names} vs {r.metric_names()}"
            )
    means = [
        MetricValue(
            name=n,
            value=sum(r.aggregate_value(n) for r in reports) / len(reports),
            polarity=polarity_of(n),
        )
        for n in names
    ]
    notes = tuple(note for r in reports for note in r.notes)
    return MetricReport(per_sample=(), aggregates=tuple(means), dataset="cross", notes=notes)


def _is_pooled(mv: MetricValue, report: MetricReport) -> bool:
    per_sample_names = {v.name for _, vals in report.per_sample for v in vals}
    return mv.name not in per_sample_names
