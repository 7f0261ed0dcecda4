"""Core domain types: masks, score maps, prompts, sequences, and run configuration.

Coordinate convention used everywhere in this package: origin at the top-left,
``x`` is the column, ``y`` is the row, and ranges are half-open pixel indices.
All types are immutable after construction; derived values are new objects.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DimensionMismatchError

__all__ = [
    "BinaryMask",
    "ScoreMap",
    "PointPrompt",
    "BoxPrompt",
    "Prompt",
    "SequenceRecord",
    "EvalConfig",
    "binarize",
]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BinaryMask:
    """A 2D boolean raster, row-major. The universal currency for ground
    truth, predictions, and mask prompts."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be 2D with positive extent, got shape {arr.shape}")
        object.__setattr__(self, "bits", _freeze(arr.astype(bool)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def foreground_fraction(self) -> float:
        return self.foreground_count() / self.bits.size

    def is_empty(self) -> bool:
        return not self.bits.any()

    def to_scores(self) -> "ScoreMap":
        """Lift to a {0,1}-valued score map."""
        return ScoreMap(self.bits.astype(np.float64))

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        require_same_shape(self, other)
        return BinaryMask(self.bits & other.bits)

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        require_same_shape(self, other)
        return BinaryMask(self.bits | other.bits)

    def __sub__(self, other: "BinaryMask") -> "BinaryMask":
        require_same_shape(self, other)
        return BinaryMask(self.bits & ~other.bits)

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(~self.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.shape, self.bits.tobytes()))

    @staticmethod
    def zeros(height: int, width: int) -> "BinaryMask":
        return BinaryMask(np.zeros((height, width), dtype=bool))

    @staticmethod
    def full(height: int, width: int) -> "BinaryMask":
        return BinaryMask(np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class ScoreMap:
    """A 2D raster of real scores in [0, 1], row-major. Soft predictions and
    anomaly maps live here; :func:`binarize` bridges to :class:`BinaryMask`."""

    scores: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"score map must be 2D with positive extent, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("scores must be finite and within [0, 1]")
        object.__setattr__(self, "scores", _freeze(arr))

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def max_score(self) -> float:
        return float(self.scores.max())

    def binarize(self, threshold: float) -> BinaryMask:
        return binarize(self, threshold)


def binarize(score_map: ScoreMap, threshold: float) -> BinaryMask:
    """Threshold a score map: foreground iff score > threshold (0 <= t < 1)."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must satisfy 0 <= t < 1, got {threshold}")
    return BinaryMask(score_map.scores > threshold)


def require_same_shape(a, b) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


FOREGROUND = 1
BACKGROUND = 0


@dataclass(frozen=True)
class PointPrompt:
    """A labeled click at pixel (x, y); label 1 = foreground, 0 = background."""

    x: int
    y: int
    label: int = FOREGROUND

    def __post_init__(self):
        if self.label not in (FOREGROUND, BACKGROUND):
            raise ValueError(f"label must be 0 or 1, got {self.label}")

    def in_bounds(self, width: int, height: int) -> bool:
        return 0 <= self.x < width and 0 <= self.y < height


@dataclass(frozen=True)
class BoxPrompt:
    """Axis-aligned box in half-open pixel coordinates: [x_min, x_max) x [y_min, y_max)."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {(self.x_min, self.y_min, self.x_max, self.y_max)}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError("box extends past the top-left image corner")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    def shorter_side(self) -> int:
        return min(self.width, self.height)

    def in_bounds(self, width: int, height: int) -> bool:
        return self.x_max <= width and self.y_max <= height

    def as_mask(self, height: int, width: int) -> BinaryMask:
        grid = np.zeros((height, width), dtype=bool)
        grid[self.y_min : self.y_max, self.x_min : self.x_max] = True
        return BinaryMask(grid)


PromptKind = str  # one of: "points", "boxes", "mask", "everything"


@dataclass(frozen=True)
class Prompt:
    """Tagged union of segmenter guidance. Exactly one kind is populated;
    ``context`` carries exemplar (image ref, mask) pairs in ICL mode only."""

    kind: PromptKind
    points: tuple[PointPrompt, ...] = ()
    boxes: tuple[BoxPrompt, ...] = ()
    mask: Optional[BinaryMask] = None
    context: tuple[tuple[str, BinaryMask], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "context", tuple((str(r), m) for r, m in self.context))
        populated = {
            "points": bool(self.points),
            "boxes": bool(self.boxes),
            "mask": self.mask is not None,
            "everything": False,
        }
        if self.kind not in populated:
            raise ValueError(f"unknown prompt kind {self.kind!r}")
        for kind, filled in populated.items():
            if filled and kind != self.kind:
                raise ValueError(f"prompt kind {self.kind!r} but {kind!r} payload is populated")
        if self.kind != "everything" and not populated[self.kind]:
            raise ValueError(f"prompt kind {self.kind!r} has no payload")

    @staticmethod
    def from_points(points: Iterable[PointPrompt], context=()) -> "Prompt":
        return Prompt(kind="points", points=tuple(points), context=tuple(context))

    @staticmethod
    def from_boxes(boxes: Iterable[BoxPrompt], context=()) -> "Prompt":
        return Prompt(kind="boxes", boxes=tuple(boxes), context=tuple(context))

    @staticmethod
    def from_mask(mask: BinaryMask, context=()) -> "Prompt":
        return Prompt(kind="mask", mask=mask, context=tuple(context))

    @staticmethod
    def everything(context=()) -> "Prompt":
        return Prompt(kind="everything", context=tuple(context))


@dataclass(frozen=True)
class SequenceRecord:
    """Ordered frames of a video or slices of a volume, with per-frame GT and
    (optionally) one prediction per frame."""

    frames: tuple[tuple[str, BinaryMask], ...]
    kind: str  # "video" | "volume"
    predictions: Optional[tuple[BinaryMask, ...]] = None

    def __post_init__(self):
        if self.kind not in ("video", "volume"):
            raise ValueError(f"sequence kind must be 'video' or 'volume', got {self.kind!r}")
        frames = tuple((str(r), m) for r, m in self.frames)
        if not frames:
            raise ValueError("sequence must contain at least one frame")
        shape = frames[0][1].shape
        for ref, mask in frames:
            if mask.shape != shape:
                raise DimensionMismatchError(
                    f"frame {ref!r} has shape {mask.shape}, expected {shape}"
                )
        object.__setattr__(self, "frames", frames)
        if self.predictions is not None:
            preds = tuple(self.predictions)
            if len(preds) != len(frames):
                raise ValueError(
                    f"{len(preds)} predictions for {len(frames)} frames"
                )
            for pred in preds:
                if pred.shape != shape:
                    raise DimensionMismatchError("prediction shape differs from frames")
            object.__setattr__(self, "predictions", preds)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0][1].shape

    def gt_masks(self) -> tuple[BinaryMask, ...]:
        return tuple(m for _, m in self.frames)

    def refs(self) -> tuple[str, ...]:
        return tuple(r for r, _ in self.frames)

    def with_predictions(self, predictions: Sequence[BinaryMask]) -> "SequenceRecord":
        return replace(self, predictions=tuple(predictions))


_RATIO_FIELDS = (
    "iou_stop",
    "ofs_threshold",
    "binarize_threshold",
    "s_measure_alpha",
    "wfm_beta2",
    "pro_fpr_cap",
)
_COUNT_FIELDS = ("click_limit", "wfm_sigma", "n_trials", "icl_count")


@dataclass(frozen=True)
class EvalConfig:
    """Every tunable knob of the evaluation pipeline, with the defaults the
    harness runs under. Round-trips losslessly through flat ``key = value``
    config files; CLI flags override file values."""

    click_limit: int = 6
    iou_stop: float = 0.9
    ofs_threshold: float = 0.9
    binarize_threshold: float = 0.5
    s_measure_alpha: float = 0.5
    wfm_beta2: float = 1.0
    wfm_sigma: int = 5
    pro_fpr_cap: float = 0.3
    n_trials: int = 5
    rng_seed: int = 0
    icl_count: int = 20

    def __post_init__(self):
        for name in _RATIO_FIELDS:
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {value}")
        for name in _COUNT_FIELDS:
            value = getattr(self, name)
            if not (isinstance(value, int) and value >= 1):
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if not isinstance(self.rng_seed, int) or not -(2**63) <= self.rng_seed < 2**64:
            raise ConfigError(f"rng_seed must fit in 64 bits, got {self.rng_seed!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **kwargs) -> "EvalConfig":
        return replace(self, **kwargs)

    def dumps(self) -> str:
        """Serialize as flat ``key = value`` lines (TOML-compatible subset)."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float):
                lines.append(f"{f.name} = {value!r}")
            else:
                lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @staticmethod
    def loads(text: str) -> "EvalConfig":
        """Parse flat ``key = value`` lines; unknown keys are rejected, every
        field is optional."""
        values: dict = {}
        known = {f.name: f.type for f in fields(EvalConfig)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, rhs = line.partition("=")
            key = key.strip()
            rhs = rhs.strip()
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            values[key] = _parse_scalar(key, rhs, lineno)
        return EvalConfig(**values)

    @staticmethod
    def load(path: Union[str, Path]) -> "EvalConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        return EvalConfig.loads(text)


def _parse_scalar(key: str, rhs: str, lineno: int):
    if rhs.startswith(("'", '"')) and rhs.endswith(rhs[0]) and len(rhs) >= 2:
        rhs = rhs[1:-1]
    is_int_field = key in _COUNT_FIELDS or key == "rng_seed"
    try:
        return int(rhs) if is_int_field else float(rhs)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {rhs!r}") from exc
