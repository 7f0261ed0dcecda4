"""Message schemas and framing for the segmenter wire protocol.

See PROTOCOL.md at the repository root for the normative description. All
messages are UTF-8 JSON objects. On a byte stream they are length-delimited:
an ASCII decimal byte count, a newline, the JSON bytes, a newline. Over HTTP
the same JSON objects travel as POST bodies.
"""

from __future__ import annotations

import json
from typing import BinaryIO, Optional

from ..core import BinaryMask, BoxPrompt, PointPrompt, Prompt
from ..errors import ProtocolError
from .rle import decode_mask, encode_mask

PROTOCOL_VERSION = "promptseg/1"

_MAX_MESSAGE = 256 * 1024 * 1024


# --------------------------------------------------------------------------
# framing
# --------------------------------------------------------------------------

def write_message(stream: BinaryIO, message: dict) -> None:
    body = json.dumps(message, sort_keys=True, separators=(",", ":")).encode("utf-8")
    stream.write(f"{len(body)}\n".encode("ascii"))
    stream.write(body)
    stream.write(b"\n")
    stream.flush()


def read_message(stream: BinaryIO) -> Optional[dict]:
    """Read one length-delimited message; None at a clean end of stream."""
    header = stream.readline()
    if not header:
        return None
    try:
        length = int(header.strip())
    except ValueError as exc:
        raise ProtocolError(f"bad frame header {header!r}") from exc
    if not 0 <= length <= _MAX_MESSAGE:
        raise ProtocolError(f"unreasonable frame length {length}")
    body = stream.read(length)
    if len(body) != length:
        raise ProtocolError("truncated frame body")
    stream.read(1)  # trailing newline
    return loads(body)


def loads(body: bytes) -> dict:
    try:
        message = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"message is not valid JSON: {exc}") from exc
    if not isinstance(message, dict) or "type" not in message:
        raise ProtocolError("message must be a JSON object with a 'type' field")
    return message


def dumps(message: dict) -> bytes:
    return json.dumps(message, sort_keys=True, separators=(",", ":")).encode("utf-8")


# --------------------------------------------------------------------------
# prompt and mask payloads
# --------------------------------------------------------------------------

def prompt_to_wire(prompt: Prompt) -> dict:
    payload: dict = {"kind": prompt.kind}
    if prompt.kind == "points":
        payload["points"] = [{"x": p.x, "y": p.y, "label": p.label} for p in prompt.points]
    elif prompt.kind == "boxes":
        payload["boxes"] = [
            {"x_min": b.x_min, "y_min": b.y_min, "x_max": b.x_max, "y_max": b.y_max}
            for b in prompt.boxes
        ]
    elif prompt.kind == "mask":
        payload["mask"] = encode_mask(prompt.mask)
    if prompt.context:
        payload["context"] = [
            {"image": ref, "mask": encode_mask(mask)} for ref, mask in prompt.context
        ]
    return payload


def prompt_from_wire(payload: dict) -> Prompt:
    try:
        kind = payload["kind"]
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"prompt payload missing kind: {payload!r}") from exc
    context = tuple(
        (entry["image"], decode_mask(entry["mask"])) for entry in payload.get("context", [])
    )
    try:
        if kind == "points":
            points = tuple(
                PointPrompt(x=int(p["x"]), y=int(p["y"]), label=int(p["label"]))
                for p in payload["points"]
            )
            return Prompt.from_points(points, context=context)
        if kind == "boxes":
            boxes = tuple(
                BoxPrompt(
                    x_min=int(b["x_min"]),
                    y_min=int(b["y_min"]),
                    x_max=int(b["x_max"]),
                    y_max=int(b["y_max"]),
                )
                for b in payload["boxes"]
            )
            return Prompt.from_boxes(boxes, context=context)
        if kind == "mask":
            return Prompt.from_mask(decode_mask(payload["mask"]), context=context)
        if kind == "everything":
            return Prompt.everything(context=context)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed {kind!r} prompt payload") from exc
    raise ProtocolError(f"unknown prompt kind {kind!r}")


# --------------------------------------------------------------------------
# requests / responses
# --------------------------------------------------------------------------

def handshake_request() -> dict:
    return {"type": "handshake", "protocol": PROTOCOL_VERSION}


def segment_request(image_ref: str, width: int, height: int, prompt: Prompt) -> dict:
    return {
        "type": "segment",
        "image": image_ref,
        "width": width,
        "height": height,
        "prompt": prompt_to_wire(prompt),
    }


def sequence_request(
    frame_refs: list[str],
    width: int,
    height: int,
    schedule: list[int],
    prompts: dict[int, Prompt],
) -> dict:
    return {
        "type": "segment_sequence",
        "frames": list(frame_refs),
        "width": width,
        "height": height,
        "schedule": list(schedule),
        "prompts": {str(i): prompt_to_wire(p) for i, p in prompts.items()},
    }


def _decode_sized_mask(payload: dict, width: int, height: int) -> BinaryMask:
    mask = decode_mask(payload)
    if mask.width != width or mask.height != height:
        raise ProtocolError(
            f"response mask is {mask.width}x{mask.height}, request was {width}x{height}"
        )
    return mask


def parse_segment_response(message: dict, width: int, height: int):
    """Validate and decode a segment response into structured parts.

    Returns ("mask", BinaryMask) | ("candidates", [(BinaryMask, float)]) |
    ("entities", [BinaryMask]).
    """
    mtype = message.get("type")
    if mtype == "error":
        raise ProtocolError(f"segmenter error: {message.get('message', 'unknown')}")
    if mtype == "mask":
        return "mask", _decode_sized_mask(message["mask"], width, height)
    if mtype == "candidates":
        try:
            cands = [
                (_decode_sized_mask(c["mask"], width, height), float(c["score"]))
                for c in message["candidates"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError("malformed candidates response") from exc
        if not cands:
            raise ProtocolError("candidates response must contain at least one candidate")
        return "candidates", cands
    if mtype == "entities":
        try:
            entities = [_decode_sized_mask(e, width, height) for e in message["entities"]]
        except (KeyError, TypeError) as exc:
            raise ProtocolError("malformed entities response") from exc
        return "entities", entities
    raise ProtocolError(f"unexpected response type {mtype!r}")


def parse_sequence_response(message: dict, n_frames: int, width: int, height: int) -> list[BinaryMask]:
    if message.get("type") == "error":
        raise ProtocolError(f"segmenter error: {message.get('message', 'unknown')}")
    if message.get("type") != "sequence_masks":
        raise ProtocolError(f"unexpected response type {message.get('type')!r}")
    masks = message.get("masks")
    if not isinstance(masks, list) or len(masks) != n_frames:
        raise ProtocolError(f"expected {n_frames} masks in sequence response")
    return [_decode_sized_mask(m, width, height) for m in masks]
