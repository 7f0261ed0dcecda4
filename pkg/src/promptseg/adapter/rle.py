"""Run-length codec for masks on the wire.

Encoding, fixed bit-exactly: the mask is scanned row-major; runs are written
as space-separated ``value count`` pairs with values alternating 0, 1, 0, ...
The first pair always has value 0 (its count is 0 when the mask starts with
foreground), every later count is >= 1, and the counts sum to width*height.
"""

from __future__ import annotations

import numpy as np

from ..core import BinaryMask
from ..errors import ProtocolError

__all__ = ["encode_mask", "decode_mask"]


def encode_mask(mask: BinaryMask) -> dict:
    flat = mask.bits.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    pairs: list[int] = []
    if flat[0] == 1:
        pairs.extend((0, 0))
    for s, e in zip(starts, ends):
        pairs.extend((int(flat[s]), int(e - s)))
    return {"width": mask.width, "height": mask.height, "rle": " ".join(map(str, pairs))}


def decode_mask(payload: dict) -> BinaryMask:
    try:
        width = int(payload["width"])
        height = int(payload["height"])
        rle = payload["rle"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed mask payload: {payload!r}") from exc
    if width < 1 or height < 1:
        raise ProtocolError(f"bad mask dimensions {width}x{height}")
    tokens = rle.split()
    if len(tokens) % 2 != 0:
        raise ProtocolError("RLE must be value/count pairs")
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    expected_value = 0
    for i in range(0, len(tokens), 2):
        try:
            value = int(tokens[i])
            count = int(tokens[i + 1])
        except ValueError as exc:
            raise ProtocolError(f"non-integer RLE token near {tokens[i]!r}") from exc
        if value != expected_value:
            raise ProtocolError("RLE values must alternate starting with background (0)")
        if count < 0 or (count == 0 and i > 0):
            raise ProtocolError("RLE counts must be positive after the first pair")
        if value == 1:
            flat[pos : pos + count] = True
        pos += count
        expected_value = 1 - expected_value
    if pos != width * height:
        raise ProtocolError(f"RLE covers {pos} pixels, expected {width * height}")
    return BinaryMask(flat.reshape(height, width))
