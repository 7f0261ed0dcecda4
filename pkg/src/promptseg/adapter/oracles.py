"""Deterministic reference segmenters.

These let the whole pipeline run and be tested with no ML model attached.
Each oracle is a pure function of (ground truth, prompt): same input, same
output, in-process or across the wire.

* ``gt`` — idealized model: answers every prompt with the ground truth
  restricted to what the prompt selects.
* ``gt-echo`` — maximally idealized: answers any prompt, and any frame of a
  sequence, with that frame's full ground truth.
* ``noisy`` — convergence fixture: a seeded morphological corruption of the
  ground truth that relaxes one step per additional click.
* ``everything`` — automatic-mode fixture: ground-truth components plus two
  distractor blobs placed entirely in the background (overlap 0 with GT).
"""

from __future__ import annotations

import hashlib
from typing import Callable, Mapping, Union

import numpy as np
from scipy import ndimage

from ..core import BinaryMask, Prompt
from ..errors import ProtocolError
from ..kernels import component_masks, morph
from . import protocol

GTLookup = Callable[[str], BinaryMask]

__all__ = [
    "GTOracle",
    "GTEchoOracle",
    "NoisyOracle",
    "EverythingOracle",
    "build_oracle",
    "serve_message",
    "as_lookup",
]


def as_lookup(gt: Union[GTLookup, Mapping[str, BinaryMask]]) -> GTLookup:
    if callable(gt):
        return gt
    mapping = dict(gt)

    def lookup(ref: str) -> BinaryMask:
        try:
            return mapping[ref]
        except KeyError:
            raise ProtocolError(f"oracle has no ground truth for image {ref!r}") from None

    return lookup


class _OracleBase:
    """Shared plumbing: GT lookup and the sequence behavior (per-frame GT)."""

    name = "oracle"
    capabilities: frozenset = frozenset()

    def __init__(self, gt: Union[GTLookup, Mapping[str, BinaryMask]]):
        self._gt = as_lookup(gt)

    def gt_of(self, image_ref: str) -> BinaryMask:
        return self._gt(image_ref)

    def segment(self, image_ref: str, prompt: Prompt):
        raise NotImplementedError

    def segment_sequence(self, frame_refs, schedule, prompts):
        return [self.gt_of(ref) for ref in frame_refs]


class GTOracle(_OracleBase):
    """Idealized segmenter: the ground truth, restricted by the prompt.

    Foreground clicks select the GT components containing them; background
    clicks select nothing. A box returns GT within the box. A mask prompt or
    any prompt with ICL context returns the full GT. Everything mode returns
    the GT components as separate entities.
    """

    name = "gt"
    capabilities = frozenset({"points", "boxes", "mask", "everything", "context_memory"})

    def segment(self, image_ref: str, prompt: Prompt):
        gt = self.gt_of(image_ref)
        if prompt.context:
            return "mask", gt
        if prompt.kind == "points":
            out = np.zeros(gt.shape, dtype=bool)
            labels, _ = ndimage.label(gt.bits, structure=np.ones((3, 3), dtype=bool))
            for p in prompt.points:
                if p.label == 1 and gt.bits[p.y, p.x]:
                    out |= labels == labels[p.y, p.x]
            return "mask", BinaryMask(out)
        if prompt.kind == "boxes":
            out = np.zeros(gt.shape, dtype=bool)
            for b in prompt.boxes:
                out[b.y_min : b.y_max, b.x_min : b.x_max] |= gt.bits[
                    b.y_min : b.y_max, b.x_min : b.x_max
                ]
            return "mask", BinaryMask(out)
        if prompt.kind == "mask":
            return "mask", gt
        return "entities", component_masks(gt)


class GTEchoOracle(_OracleBase):
    """Returns the frame's full ground truth for any prompt."""

    name = "gt-echo"
    capabilities = frozenset({"points", "boxes", "mask", "everything", "context_memory"})

    def segment(self, image_ref: str, prompt: Prompt):
        if prompt.kind == "everything" and not prompt.context:
            return "entities", component_masks(self.gt_of(image_ref))
        return "mask", self.gt_of(image_ref)


class NoisyOracle(_OracleBase):
    """Ground truth after a seeded erosion or dilation of 1..5 iterations,
    relaxed by one iteration per click beyond the first. With the default
    click budget this converges to the exact GT, so interactive click loops
    can be tested for real convergence."""

    name = "noisy"
    capabilities = frozenset({"points", "boxes", "mask", "everything", "context_memory"})

    def __init__(self, gt, seed: int = 0):
        super().__init__(gt)
        self.seed = int(seed)

    def _corruption(self, image_ref: str) -> tuple[str, int]:
        digest = hashlib.blake2s(f"{self.seed}:{image_ref}".encode("utf-8")).digest()
        op = "erode" if digest[0] % 2 == 0 else "dilate"
        iterations = 1 + digest[1] % 5
        return op, iterations

    def segment(self, image_ref: str, prompt: Prompt):
        gt = self.gt_of(image_ref)
        op, iterations = self._corruption(image_ref)
        if prompt.kind == "points":
            iterations = max(0, iterations - (len(prompt.points) - 1))
        out = morph(gt, op, iterations)
        if out.is_empty():
            out = gt  # over-eroded: degenerate fixture input, fall back
        if prompt.kind == "everything" and not prompt.context:
            return "entities", component_masks(out)
        return "mask", out


class EverythingOracle(_OracleBase):
    """Everything-mode fixture: GT components plus up to two 3x3 distractor
    blobs placed fully in the background, so overlap filtering has something
    to reject. Placement is deterministic: the first block that fits scanning
    from the top-left, and the last scanning from the bottom-right."""

    name = "everything"
    capabilities = frozenset({"everything"})

    def segment(self, image_ref: str, prompt: Prompt):
        gt = self.gt_of(image_ref)
        entities = component_masks(gt)
        entities.extend(self._distractors(gt))
        return "entities", entities

    @staticmethod
    def _distractors(gt: BinaryMask) -> list[BinaryMask]:
        fits = ndimage.binary_erosion(
            ~gt.bits, structure=np.ones((3, 3), dtype=bool), border_value=0
        )
        centers = np.argwhere(fits)
        out: list[BinaryMask] = []
        taken: list[np.ndarray] = []
        for center in (centers[0], centers[-1]) if centers.size else ():
            if any(np.abs(center - t).max() < 3 for t in taken):
                continue
            blob = np.zeros(gt.shape, dtype=bool)
            y, x = int(center[0]), int(center[1])
            blob[y - 1 : y + 2, x - 1 : x + 2] = True
            out.append(BinaryMask(blob))
            taken.append(center)
        return out


_ORACLES = {
    "gt": GTOracle,
    "gt-echo": GTEchoOracle,
    "noisy": NoisyOracle,
    "everything": EverythingOracle,
}


def build_oracle(name: str, gt, seed: int = 0) -> _OracleBase:
    try:
        cls = _ORACLES[name]
    except KeyError:
        raise ValueError(f"unknown oracle {name!r}; choose from {sorted(_ORACLES)}") from None
    if cls is NoisyOracle:
        return NoisyOracle(gt, seed=seed)
    return cls(gt)


# --------------------------------------------------------------------------
# wire-level server shared by the local transport and the stdio server
# --------------------------------------------------------------------------

def serve_message(oracle: _OracleBase, message: dict, session: str = "local") -> dict:
    mtype = message.get("type")
    if mtype == "handshake":
        if message.get("protocol") != protocol.PROTOCOL_VERSION:
            return {
                "type": "error",
                "message": f"unsupported protocol {message.get('protocol')!r}, "
                f"server speaks {protocol.PROTOCOL_VERSION}",
            }
        return {
            "type": "capabilities",
            "protocol": protocol.PROTOCOL_VERSION,
            "capabilities": sorted(oracle.capabilities),
            "session": session,
            "identity": f"oracle:{oracle.name}",
        }
    try:
        if mtype == "segment":
            prompt = protocol.prompt_from_wire(message["prompt"])
            kind, payload = oracle.segment(message["image"], prompt)
            if kind == "mask":
                return {"type": "mask", "mask": protocol.encode_mask(payload)}
            if kind == "candidates":
                return {
                    "type": "candidates",
                    "candidates": [
                        {"mask": protocol.encode_mask(m), "score": s} for m, s in payload
                    ],
                }
            return {
                "type": "entities",
                "entities": [protocol.encode_mask(m) for m in payload],
            }
        if mtype == "segment_sequence":
            prompts = {
                int(i): protocol.prompt_from_wire(p)
                for i, p in message.get("prompts", {}).items()
            }
            masks = oracle.segment_sequence(
                message["frames"], [int(i) for i in message.get("schedule", [])], prompts
            )
            return {
                "type": "sequence_masks",
                "masks": [protocol.encode_mask(m) for m in masks],
            }
    except ProtocolError as exc:
        return {"type": "error", "message": str(exc)}
    except KeyError as exc:
        return {"type": "error", "message": f"missing field {exc}"}
    return {"type": "error", "message": f"unknown request type {mtype!r}"}
