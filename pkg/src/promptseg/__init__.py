"""promptseg: prompt-driven evaluation of promptable segmenters.

Synthesizes ideal and perturbed prompts from ground-truth masks, drives any
external segmenter through a small JSON wire protocol (image, video, and
volume regimes), and scores predictions with a full mask-quality metric
suite, emitting per-sample and aggregate reports.
"""

__version__ = "0.1.0"

from .core import (
    BinaryMask,
    BoxPrompt,
    EvalConfig,
    PointPrompt,
    Prompt,
    ScoreMap,
    SequenceRecord,
    binarize,
)

__all__ = [
    "__version__",
    "BinaryMask",
    "ScoreMap",
    "PointPrompt",
    "BoxPrompt",
    "Prompt",
    "SequenceRecord",
    "EvalConfig",
    "binarize",
]
