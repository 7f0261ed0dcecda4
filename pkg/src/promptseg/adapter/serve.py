"""Run a bundled oracle as a stdio protocol server.

Usage:
    python -m promptseg.adapter.serve --oracle gt --dataset ROOT --kind image

Ground truth is resolved through the same dataset scanner the harness uses:
each request's image ref must be an image path from that dataset, and the
server answers from the paired mask.
"""

from __future__ import annotations

import argparse
import sys

from ..datasets import gt_lookup_for, scan_dataset
from . import protocol
from .oracles import build_oracle, serve_message


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--oracle", default="gt", help="gt | gt-echo | noisy | everything")
    parser.add_argument("--dataset", required=True, help="dataset root directory")
    parser.add_argument("--kind", default="image", choices=["image", "video", "volume"])
    parser.add_argument("--split", default="test")
    parser.add_argument("--seed", type=int, default=0, help="noisy-oracle corruption seed")
    args = parser.parse_args(argv)

    manifest = scan_dataset(args.dataset, args.kind, split=args.split)
    oracle = build_oracle(args.oracle, gt_lookup_for(manifest), seed=args.seed)

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    while True:
        message = protocol.read_message(stdin)
        if message is None:
            return 0
        protocol.write_message(stdout, serve_message(oracle, message, session="stdio"))


if __name__ == "__main__":
    raise SystemExit(main())
