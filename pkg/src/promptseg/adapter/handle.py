"""Client-side handle over any segmenter speaking the wire protocol.

Three transports: in-process (bundled oracles, still round-tripped through
the JSON codec so the protocol is always exercised), subprocess stdio, and
HTTP POST. Capability checks happen locally before any transport traffic;
transport failures are retried once and then abort the sample.
"""

from __future__ import annotations

import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional, Sequence

from ..core import BinaryMask, Prompt
from ..errors import CapabilityError, ProtocolError, TransportError
from . import protocol
from .oracles import _OracleBase, serve_message

__all__ = [
    "SegmentResult",
    "SegmenterHandle",
    "LocalTransport",
    "SubprocessTransport",
    "HttpTransport",
]

_KIND_CAPABILITY = {
    "points": "points",
    "boxes": "boxes",
    "mask": "mask",
    "everything": "everything",
}


@dataclass(frozen=True)
class SegmentResult:
    """Decoded segment response: exactly one of the three shapes."""

    kind: str  # "mask" | "candidates" | "entities"
    mask: Optional[BinaryMask] = None
    candidates: tuple[tuple[BinaryMask, float], ...] = ()
    entities: tuple[BinaryMask, ...] = ()

    def best_mask(self) -> BinaryMask:
        """The single prediction: the mask itself, or the highest-scoring
        candidate (first wins ties)."""
        if self.kind == "mask":
            return self.mask
        if self.kind == "candidates":
            return max(self.candidates, key=lambda c: c[1])[0]
        raise ProtocolError("an entities response has no single best mask; run overlap filtering")


class LocalTransport:
    """In-process oracle, with requests and responses still serialized through
    the wire codec so local runs obey the same contract as remote ones."""

    def __init__(self, oracle: _OracleBase):
        self._oracle = oracle
        self.identity = f"oracle:{oracle.name}"

    def send(self, message: dict) -> dict:
        request = protocol.loads(protocol.dumps(message))
        response = serve_message(self._oracle, request)
        return protocol.loads(protocol.dumps(response))

    def reset(self) -> None:
        pass

    def close(self) -> None:
        pass


class SubprocessTransport:
    """Length-delimited JSON over a child process's stdin/stdout."""

    def __init__(self, command: Sequence[str]):
        self._command = list(command)
        self.identity = f"cmd:{' '.join(self._command)}"
        self._proc: Optional[subprocess.Popen] = None
        self._handshake_msg: Optional[dict] = None
        self._fresh = True
        self._lock = threading.Lock()

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
            self._fresh = True
        return self._proc

    def _exchange(self, proc: subprocess.Popen, message: dict) -> dict:
        try:
            protocol.write_message(proc.stdin, message)
            response = protocol.read_message(proc.stdout)
        except (OSError, ValueError) as exc:
            raise TransportError(f"subprocess transport failed: {exc}") from exc
        if response is None:
            raise TransportError("subprocess closed the stream mid-session")
        return response

    def send(self, message: dict) -> dict:
        with self._lock:  # one in-flight request per session
            proc = self._ensure()
            if message.get("type") == "handshake":
                self._handshake_msg = message
                self._fresh = False
                return self._exchange(proc, message)
            if self._fresh and self._handshake_msg is not None:
                # a restarted server needs the handshake replayed first
                self._exchange(proc, self._handshake_msg)
                self._fresh = False
            return self._exchange(proc, message)

    def reset(self) -> None:
        with self._lock:
            if self._proc is not None:
                self._proc.kill()
                self._proc.wait()
                self._proc = None

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            self._proc = None


class HttpTransport:
    """The same JSON messages as HTTP POST bodies."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout
        self.identity = f"http:{url}"

    def send(self, message: dict) -> dict:
        request = urllib.request.Request(
            self.url,
            data=protocol.dumps(message),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = resp.read()
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"HTTP transport failed: {exc}") from exc
        return protocol.loads(body)

    def reset(self) -> None:
        pass

    def close(self) -> None:
        pass


class SegmenterHandle:
    """Capability-checked, retrying client over one transport session."""

    def __init__(self, transport, retries: int = 1):
        self._transport = transport
        self._retries = retries
        self.capabilities: frozenset = frozenset()
        self.session_id: Optional[str] = None
        self.identity: str = getattr(transport, "identity", "segmenter")
        self._ready = False

    # -- lifecycle ---------------------------------------------------------

    def handshake(self) -> frozenset:
        response = self._send(protocol.handshake_request())
        if response.get("type") == "error":
            raise ProtocolError(f"handshake rejected: {response.get('message')}")
        if response.get("type") != "capabilities":
            raise ProtocolError(f"unexpected handshake response {response.get('type')!r}")
        version = response.get("protocol")
        if version != protocol.PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: server speaks {version!r}, "
                f"client speaks {protocol.PROTOCOL_VERSION!r}"
            )
        self.capabilities = frozenset(response.get("capabilities", ()))
        self.session_id = response.get("session")
        self.identity = response.get("identity", self.identity)
        self._ready = True
        return self.capabilities

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "SegmenterHandle":
        self.handshake()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- requests ----------------------------------------------------------

    def segment(self, image_ref: str, width: int, height: int, prompt: Prompt) -> SegmentResult:
        self._require_capability(_KIND_CAPABILITY[prompt.kind])
        if prompt.context:
            self._require_capability("context_memory")
        response = self._send(protocol.segment_request(image_ref, width, height, prompt))
        kind, payload = protocol.parse_segment_response(response, width, height)
        if kind == "mask":
            return SegmentResult(kind="mask", mask=payload)
        if kind == "candidates":
            return SegmentResult(kind="candidates", candidates=tuple(payload))
        return SegmentResult(kind="entities", entities=tuple(payload))

    def segment_sequence(
        self,
        frame_refs: Sequence[str],
        width: int,
        height: int,
        schedule: Sequence[int],
        prompts: dict[int, Prompt],
    ) -> list[BinaryMask]:
        self._require_capability("context_memory")
        response = self._send(
            protocol.sequence_request(list(frame_refs), width, height, list(schedule), prompts)
        )
        return protocol.parse_sequence_response(response, len(frame_refs), width, height)

    # -- internals ---------------------------------------------------------

    def _require_capability(self, capability: str) -> None:
        if not self._ready:
            self.handshake()
        if capability not in self.capabilities:
            raise CapabilityError(
                f"segmenter {self.identity} does not declare capability {capability!r} "
                f"(has {sorted(self.capabilities)})"
            )

    def _send(self, message: dict) -> dict:
        attempts = self._retries + 1
        last: Optional[Exception] = None
        for attempt in range(attempts):
            try:
                return self._transport.send(message)
            except TransportError as exc:
                last = exc
                if attempt + 1 < attempts:
                    reset = getattr(self._transport, "reset", None)
                    if reset is not None:
                        reset()
        raise TransportError(f"{last} (after {attempts} attempts)")
