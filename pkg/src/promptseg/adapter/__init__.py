"""Segmenter adapter: wire protocol, transports, and reference oracles."""

from .handle import SegmenterHandle, SegmentResult, LocalTransport, SubprocessTransport, HttpTransport
from .oracles import GTOracle, GTEchoOracle, NoisyOracle, EverythingOracle, build_oracle
from .protocol import PROTOCOL_VERSION

__all__ = [
    "SegmenterHandle",
    "SegmentResult",
    "LocalTransport",
    "SubprocessTransport",
    "HttpTransport",
    "GTOracle",
    "GTEchoOracle",
    "NoisyOracle",
    "EverythingOracle",
    "build_oracle",
    "PROTOCOL_VERSION",
]
