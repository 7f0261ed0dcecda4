"""Local dataset ingestion: pairing images with ground-truth masks.

Directory layouts (documented contract):

* image datasets::

      root/images/<stem>.<ext>
      root/masks/<stem>.<ext>

  Pairs are matched by filename stem. Images without a mask (or masks
  without an image) become warnings, never silent drops.

* video and volume datasets::

      root/<sequence>/images/<frame>.<ext>
      root/<sequence>/masks/<frame>.<ext>

  One subdirectory per sequence; frames are ordered numerically by filename
  stem (zero-padding tolerated), falling back to lexicographic order for
  non-numeric stems.

Masks must be 8-bit grayscale; a pixel is foreground iff its value is
strictly greater than 127, which collapses anti-aliased or instance-labeled
masks to binary deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from PIL import Image

from .core import BinaryMask, SequenceRecord
from .errors import DatasetError

__all__ = [
    "ImageSample",
    "SequenceEntry",
    "DatasetManifest",
    "scan_dataset",
    "load_mask",
    "save_mask",
    "load_sequence",
    "gt_lookup_for",
    "icl_pairs",
]

_IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}


@dataclass(frozen=True)
class ImageSample:
    sample_id: str
    image_ref: str
    mask_ref: str


@dataclass(frozen=True)
class SequenceEntry:
    name: str
    frames: tuple[ImageSample, ...]


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    kind: str  # "image" | "video" | "volume"
    split: str
    samples: tuple[ImageSample, ...] = ()
    sequences: tuple[SequenceEntry, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("image", "video", "volume"):
            raise DatasetError(f"unknown dataset kind {self.kind!r}")

    def sample_count(self) -> int:
        if self.kind == "image":
            return len(self.samples)
        return sum(len(seq.frames) for seq in self.sequences)


def _stem_key(stem: str):
    """Numeric-aware ordering key: '9' before '10', '0009' equals '9'."""
    try:
        return (0, int(stem), stem)
    except ValueError:
        return (1, 0, stem)


def _list_rasters(directory: Path) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.is_file() and path.suffix.lower() in _IMAGE_EXTS:
            out[path.stem] = path
    return out


def _pair_directory(
    images_dir: Path, masks_dir: Path, prefix: str, warnings: list[str]
) -> list[ImageSample]:
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise DatasetError(
            f"expected sibling directories {images_dir} and {masks_dir}"
        )
    images = _list_rasters(images_dir)
    masks = _list_rasters(masks_dir)
    samples = []
    for stem in sorted(images, key=_stem_key):
        if stem in masks:
            sample_id = f"{prefix}{stem}" if prefix else stem
            samples.append(
                ImageSample(
                    sample_id=sample_id,
                    image_ref=str(images[stem]),
                    mask_ref=str(masks[stem]),
                )
            )
        else:
            warnings.append(f"image without mask: {images[stem]}")
    for stem in sorted(set(masks) - set(images), key=_stem_key):
        warnings.append(f"mask without image: {masks[stem]}")
    return samples


def scan_dataset(
    root: Union[str, Path],
    kind: str,
    split: str = "test",
    name: Optional[str] = None,
    expected_count: Optional[int] = None,
) -> DatasetManifest:
    """Walk a dataset root and build its manifest.

    ``expected_count`` is a warn-only sanity assertion (local copies may be
    partial); a dataset with zero matched pairs is an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    name = name or root.name
    warnings: list[str] = []

    if kind == "image":
        samples = _pair_directory(root / "images", root / "masks", "", warnings)
        manifest = DatasetManifest(
            name=name, kind=kind, split=split, samples=tuple(samples), warnings=tuple(warnings)
        )
    elif kind in ("video", "volume"):
        sequences = []
        for seq_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            frames = _pair_directory(
                seq_dir / "images", seq_dir / "masks", f"{seq_dir.name}/", warnings
            )
            if frames:
                sequences.append(SequenceEntry(name=seq_dir.name, frames=tuple(frames)))
            else:
                warnings.append(f"sequence with no usable frames: {seq_dir}")
        manifest = DatasetManifest(
            name=name,
            kind=kind,
            split=split,
            sequences=tuple(sequences),
            warnings=tuple(warnings),
        )
    else:
        raise DatasetError(f"unknown dataset kind {kind!r}")

    if manifest.sample_count() == 0:
        raise DatasetError(f"no image/mask pairs found under {root}")
    if expected_count is not None and manifest.sample_count() != expected_count:
        warnings.append(
            f"expected {expected_count} samples, found {manifest.sample_count()}"
        )
        manifest = DatasetManifest(
            name=manifest.name,
            kind=manifest.kind,
            split=manifest.split,
            samples=manifest.samples,
            sequences=manifest.sequences,
            warnings=tuple(warnings),
        )
    return manifest


def load_mask(path: Union[str, Path]) -> BinaryMask:
    """Decode an 8-bit grayscale mask file; foreground iff pixel > 127."""
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise DatasetError(
                    f"mask {path} has mode {img.mode!r}; convert it to 8-bit "
                    "grayscale (PIL mode 'L') first"
                )
            arr = np.asarray(img, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise DatasetError(f"cannot decode mask {path}: {exc}") from exc
    return BinaryMask(arr > 127)


def save_mask(mask: BinaryMask, path: Union[str, Path]) -> None:
    """Write a mask as an 8-bit grayscale file (0 / 255)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path)


def load_sequence(entry: SequenceEntry, kind: str) -> SequenceRecord:
    frames = tuple((frame.image_ref, load_mask(frame.mask_ref)) for frame in entry.frames)
    return SequenceRecord(frames=frames, kind=kind)


def gt_lookup_for(manifest: DatasetManifest) -> Callable[[str], BinaryMask]:
    """Image ref -> GT mask resolver backed by the manifest, with caching."""
    mask_by_ref: dict[str, str] = {}
    if manifest.kind == "image":
        for s in manifest.samples:
            mask_by_ref[s.image_ref] = s.mask_ref
    else:
        for seq in manifest.sequences:
            for s in seq.frames:
                mask_by_ref[s.image_ref] = s.mask_ref
    cache: dict[str, BinaryMask] = {}

    def lookup(image_ref: str) -> BinaryMask:
        if image_ref not in mask_by_ref:
            raise DatasetError(f"image {image_ref!r} is not part of dataset {manifest.name}")
        if image_ref not in cache:
            cache[image_ref] = load_mask(mask_by_ref[image_ref])
        return cache[image_ref]

    return lookup


class LazyPairs:
    """Sequence of (image ref, GT mask) pairs in the dataset's native sample
    order, decoding masks only on access."""

    def __init__(self, manifest: DatasetManifest):
        if manifest.kind != "image":
            raise DatasetError("context exemplars come from image datasets")
        self._samples = manifest.samples

    def __len__(self) -> int:
        return len(self._samples)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        sample = self._samples[index]
        return (sample.image_ref, load_mask(sample.mask_ref))


def icl_pairs(manifest: DatasetManifest) -> LazyPairs:
    """(image ref, GT mask) pairs in the dataset's native sample order."""
    return LazyPairs(manifest)
