"""Shared test fixtures: synthetic masks, datasets on disk, and tiny oracles."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.ndimage import uniform_filter

from promptseg.adapter.handle import LocalTransport, SegmenterHandle
from promptseg.adapter.oracles import _OracleBase
from promptseg.core import BinaryMask
from promptseg.datasets import save_mask


# --------------------------------------------------------------------------
# mask generators
# --------------------------------------------------------------------------

def disk_mask(size: int, cy: int, cx: int, r: int) -> BinaryMask:
    yy, xx = np.mgrid[0:size, 0:size]
    return BinaryMask((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)


def random_blob_gt(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Smoothed-noise blobs with both classes present."""
    while True:
        smooth = uniform_filter(rng.random((size, size)), size=9)
        gt = smooth > np.quantile(smooth, rng.uniform(0.5, 0.95))
        if 2 <= gt.sum() <= gt.size - 2:
            return gt


def random_disk_gt(rng: np.random.Generator, size: int = 64, max_blobs: int = 3) -> np.ndarray:
    """One to three disk-shaped regions (anomaly-style ground truth)."""
    gt = np.zeros((size, size), dtype=bool)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(1, max_blobs + 1))):
        cy, cx = (int(v) for v in rng.integers(5, size - 5, size=2))
        r = int(rng.integers(2, 7))
        gt |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    return gt


def random_quantized_pred(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """8-bit-style prediction map: scores on the 0/255 .. 255/255 grid."""
    return rng.integers(0, 256, size=(size, size)).astype(np.float64) / 255.0


def random_mask(rng: np.random.Generator, size: int = 32, p: float = 0.5) -> BinaryMask:
    return BinaryMask(rng.random((size, size)) < p)


# --------------------------------------------------------------------------
# test oracles
# --------------------------------------------------------------------------

class EmptyOracle(_OracleBase):
    """Always returns an all-background mask of the advertised shape."""

    name = "empty"
    capabilities = frozenset({"points", "boxes", "mask", "everything", "context_memory"})

    def __init__(self, height: int, width: int):
        super().__init__({})
        self._shape = (height, width)

    def segment(self, image_ref, prompt):
        return "mask", BinaryMask.zeros(*self._shape)

    def segment_sequence(self, frame_refs, schedule, prompts):
        return [BinaryMask.zeros(*self._shape) for _ in frame_refs]


class EchoMaskOracle(_OracleBase):
    """Identity on mask prompts: returns the prompt mask itself."""

    name = "echo-mask"
    capabilities = frozenset({"mask"})

    def __init__(self):
        super().__init__({})

    def segment(self, image_ref, prompt):
        return "mask", prompt.mask


class RecordingOracle(_OracleBase):
    """Delegates to an inner oracle while recording every request."""

    def __init__(self, inner: _OracleBase):
        self._inner = inner
        self.name = inner.name
        self.capabilities = inner.capabilities
        self.segment_calls: list = []
        self.sequence_calls: list = []

    def segment(self, image_ref, prompt):
        self.segment_calls.append((image_ref, prompt))
        return self._inner.segment(image_ref, prompt)

    def segment_sequence(self, frame_refs, schedule, prompts):
        self.sequence_calls.append((tuple(frame_refs), tuple(schedule), dict(prompts)))
        return self._inner.segment_sequence(frame_refs, schedule, prompts)


def local_handle(oracle) -> SegmenterHandle:
    handle = SegmenterHandle(LocalTransport(oracle))
    handle.handshake()
    return handle


# --------------------------------------------------------------------------
# datasets on disk
# --------------------------------------------------------------------------

def make_image_dataset(root, masks: dict[str, BinaryMask]):
    """Write an image-kind dataset; images are copies of the masks (their
    pixels are never read by the oracles)."""
    for stem, mask in masks.items():
        save_mask(mask, root / "images" / f"{stem}.png")
        save_mask(mask, root / "masks" / f"{stem}.png")
    return root


def make_sequence_dataset(root, sequences: dict[str, list[BinaryMask]]):
    for seq_name, frames in sequences.items():
        for i, mask in enumerate(frames):
            save_mask(mask, root / seq_name / "images" / f"{i:04d}.png")
            save_mask(mask, root / seq_name / "masks" / f"{i:04d}.png")
    return root


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260809)
