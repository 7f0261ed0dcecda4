"""Pixel-grid primitives shared by prompting, perturbation, and metrics.

Conventions fixed here and documented once:

* connected components default to 8-connectivity, labels dense 1..count in
  row-major first-encounter order;
* distances are exact Euclidean, and the image border counts as background,
  so "farthest from the background" is well defined for masks touching the
  edge;
* morphology uses the 3x3 cross structuring element, with pixels outside the
  image treated as background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import BinaryMask, BoxPrompt, require_same_shape
from .errors import EmptyMaskError

__all__ = [
    "ComponentSet",
    "connected_components",
    "distance_to_background",
    "nearest_foreground",
    "bounding_box",
    "component_masks",
    "component_boxes",
    "morph",
    "overlap_fraction",
]

_CROSS = ndimage.generate_binary_structure(2, 1)  # 3x3 cross
_EIGHT = ndimage.generate_binary_structure(2, 2)  # 3x3 full block


@dataclass(frozen=True)
class ComponentSet:
    """Connected components of a mask: a dense label map (0 = background,
    1..count = components in first-scan order) plus per-component areas."""

    label_map: np.ndarray
    count: int
    areas: tuple[int, ...]

    def mask_of(self, label: int) -> BinaryMask:
        if not 1 <= label <= self.count:
            raise ValueError(f"label {label} outside 1..{self.count}")
        return BinaryMask(self.label_map == label)

    def masks(self) -> list[BinaryMask]:
        return [self.mask_of(k) for k in range(1, self.count + 1)]


def connected_components(mask: BinaryMask, connectivity: int = 8) -> ComponentSet:
    """Label connected foreground regions. An empty mask yields count 0."""
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _EIGHT if connectivity == 8 else _CROSS
    raw, count = ndimage.label(mask.bits, structure=structure)
    if count == 0:
        return ComponentSet(label_map=raw, count=0, areas=())
    # Relabel into row-major first-encounter order so labeling is a stable
    # contract rather than an implementation detail of scipy.
    flat = raw.ravel()
    first_seen = np.full(count + 1, flat.size, dtype=np.int64)
    nonzero = np.flatnonzero(flat)
    # reversed assignment leaves the first (smallest) index per label
    first_seen[flat[nonzero[::-1]]] = nonzero[::-1]
    order = np.argsort(first_seen[1:], kind="stable")  # old label-1 -> rank
    remap = np.zeros(count + 1, dtype=raw.dtype)
    remap[order + 1] = np.arange(1, count + 1)
    label_map = remap[raw]
    areas = np.bincount(label_map.ravel(), minlength=count + 1)[1:]
    out = ComponentSet(label_map=label_map, count=int(count), areas=tuple(int(a) for a in areas))
    out.label_map.flags.writeable = False
    return out


def distance_to_background(mask: BinaryMask) -> np.ndarray:
    """Exact Euclidean distance from each foreground pixel to the nearest
    background pixel, with the image border counting as background.
    Background pixels hold 0."""
    padded = np.zeros((mask.height + 2, mask.width + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask.bits
    dist = ndimage.distance_transform_edt(padded)
    out = dist[1:-1, 1:-1]
    out.flags.writeable = False
    return out


def nearest_foreground(mask: BinaryMask) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For every pixel, the exact Euclidean distance to the nearest foreground
    pixel plus that pixel's (row, col). Ties break to the smallest row-major
    index, so the map is a deterministic contract rather than an accident of
    the transform implementation. Foreground pixels map to themselves."""
    bits = mask.bits
    if not bits.any():
        raise EmptyMaskError("nearest_foreground needs a nonempty mask")
    h, w = bits.shape
    dist = ndimage.distance_transform_edt(~bits)
    d2 = np.rint(dist * dist).astype(np.int64).ravel()
    out_y, out_x = np.mgrid[0:h, 0:w]
    out_y, out_x = out_y.copy(), out_x.copy()
    # group pixels by squared distance with one sort, then realize the tie
    # rule by probing candidate offsets in lexicographic order per group
    order = np.argsort(d2, kind="stable")
    values, starts = np.unique(d2[order], return_index=True)
    boundaries = np.append(starts, d2.size)
    for value, lo, hi in zip(values, boundaries[:-1], boundaries[1:]):
        if value == 0:
            continue
        flat = order[lo:hi]
        pys, pxs = np.divmod(flat, w)
        filled = np.zeros(pys.size, dtype=bool)
        for dy, dx in _circle_offsets(int(value)):
            if filled.all():
                break
            ty = pys + dy
            tx = pxs + dx
            candidate = ~filled & (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
            tyc = np.clip(ty, 0, h - 1)
            txc = np.clip(tx, 0, w - 1)
            candidate &= bits[tyc, txc]
            out_y[pys[candidate], pxs[candidate]] = ty[candidate]
            out_x[pys[candidate], pxs[candidate]] = tx[candidate]
            filled |= candidate
    dist.flags.writeable = False
    out_y.flags.writeable = False
    out_x.flags.writeable = False
    return dist, out_y, out_x


def _circle_offsets(k: int) -> list[tuple[int, int]]:
    """Integer vectors (dy, dx) with dy^2 + dx^2 = k, lexicographically
    ascending (the order that realizes the smallest-index tie rule)."""
    out = []
    r = math.isqrt(k)
    for dy in range(-r, r + 1):
        rest = k - dy * dy
        s = math.isqrt(rest)
        if s * s != rest:
            continue
        if s == 0:
            out.append((dy, 0))
        else:
            out.append((dy, -s))
            out.append((dy, s))
    return out


def bounding_box(component: BinaryMask) -> BoxPrompt:
    """Tightest axis-aligned box around the foreground, half-open coordinates."""
    rows = np.flatnonzero(component.bits.any(axis=1))
    cols = np.flatnonzero(component.bits.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("cannot bound an empty component")
    return BoxPrompt(
        x_min=int(cols[0]),
        y_min=int(rows[0]),
        x_max=int(cols[-1]) + 1,
        y_max=int(rows[-1]) + 1,
    )


def component_masks(mask: BinaryMask, connectivity: int = 8) -> list[BinaryMask]:
    return connected_components(mask, connectivity).masks()


def component_boxes(mask: BinaryMask, connectivity: int = 8) -> list[BoxPrompt]:
    """One tight box per connected component, in first-scan label order."""
    return [bounding_box(m) for m in component_masks(mask, connectivity)]


def morph(mask: BinaryMask, op: str, iterations: int) -> BinaryMask:
    """Erode or dilate with the 3x3 cross element; ``iterations=0`` is identity."""
    if op not in ("erode", "dilate"):
        raise ValueError(f"op must be 'erode' or 'dilate', got {op!r}")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0:
        return mask
    if op == "erode":
        out = ndimage.binary_erosion(mask.bits, structure=_CROSS, iterations=iterations, border_value=0)
    else:
        out = ndimage.binary_dilation(mask.bits, structure=_CROSS, iterations=iterations, border_value=0)
    return BinaryMask(out)


def overlap_fraction(entity: BinaryMask, gt: BinaryMask) -> float:
    """|entity intersect gt| / |entity|, in [0, 1]."""
    require_same_shape(entity, gt)
    area = entity.foreground_count()
    if area == 0:
        raise EmptyMaskError("overlap fraction of an empty entity is undefined")
    inter = int(np.count_nonzero(entity.bits & gt.bits))
    return inter / area
