"""Command-line entry point.

Subcommands:

* ``eval``    — run a prompting pipeline over one or more datasets and write
  per-sample CSV, aggregate JSON, a run manifest, and figures;
* ``perturb`` — compute the ideal baseline, rerun under seeded prompt
  perturbations, and write trial statistics (mean, std, relative change);
* ``report``  — re-aggregate existing per-sample CSV files.

Flags mirror the evaluation config one to one; a ``--config`` file supplies
defaults and flags override it. ``PROMPTSEG_ENDPOINT`` and ``PROMPTSEG_SEED``
override the segmenter endpoint and the seed, and nothing else. Progress and
warnings go to stderr; data only to files.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional

from . import __version__
from .adapter import (
    HttpTransport,
    LocalTransport,
    PROTOCOL_VERSION,
    SegmenterHandle,
    SubprocessTransport,
    build_oracle,
)
from .core import EvalConfig
from .datasets import DatasetManifest, gt_lookup_for, icl_pairs, scan_dataset
from .errors import PromptsegError
from .metrics import aggregate
from .pipeline import (
    DEFAULT_METRICS,
    POOLED_METRICS,
    RunSpec,
    evaluate_image_dataset,
    evaluate_sequence_dataset,
    perturb_image_dataset,
)
from .reports import (
    aggregates_json,
    per_sample_csv,
    render_aggregate_figure,
    render_trials_figure,
    read_per_sample_csv,
    trials_csv,
    trials_json,
    write_run_manifest,
)

_CONFIG_FLAGS = [f.name for f in fields(EvalConfig)]


def _warn(message: str) -> None:
    print(f"promptseg: {message}", file=sys.stderr)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    group = parser.add_argument_group("evaluation config (overrides --config)")
    for name in _CONFIG_FLAGS:
        flag = "--" + name.replace("_", "-")
        kind = int if name in ("click_limit", "wfm_sigma", "n_trials", "rng_seed", "icl_count") else float
        group.add_argument(flag, type=kind, default=None, dest=f"cfg_{name}")


def _build_config(args) -> EvalConfig:
    cfg = EvalConfig.load(args.config) if args.config else EvalConfig()
    overrides = {
        name: getattr(args, f"cfg_{name}")
        for name in _CONFIG_FLAGS
        if getattr(args, f"cfg_{name}") is not None
    }
    env_seed = os.environ.get("PROMPTSEG_SEED")
    if env_seed is not None:
        overrides["rng_seed"] = int(env_seed)
    return cfg.replace(**overrides) if overrides else cfg


def _add_common(parser: argparse.ArgumentParser, kinds=("image", "video", "volume")) -> None:
    parser.add_argument("--dataset", action="append", required=True, help="dataset root (repeatable)")
    parser.add_argument("--kind", choices=kinds, default="image")
    parser.add_argument("--split", default="test")
    parser.add_argument(
        "--segmenter",
        default="oracle:gt",
        help="oracle:{gt,gt-echo,noisy,everything} | cmd:<command line> | http(s)://url",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--metrics",
        default=",".join(DEFAULT_METRICS),
        help=f"comma-separated; per-sample: {','.join(DEFAULT_METRICS)}; "
        f"pooled: {','.join(POOLED_METRICS)}",
    )
    parser.add_argument("--limit", type=int, default=None, help="evaluate only the first N samples")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel workers")
    _add_config_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptseg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"promptseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a segmenter with ideal GT-derived prompts")
    _add_common(p_eval)
    p_eval.add_argument(
        "--mode",
        default="box",
        choices=["point", "box", "mask", "everything", "icl"],
        help="prompt mode (image) or scheduled-prompt mode (video multiframe / volume)",
    )
    p_eval.add_argument(
        "--strategy",
        default=None,
        choices=["per_frame_gt", "propagated_point", "propagated_box", "multiframe"],
        help="video prompting strategy",
    )
    p_eval.add_argument("--k", type=int, default=1, choices=[1, 3, 5], help="prompted frame count")
    p_eval.add_argument("--train-dataset", default=None, help="training split root for ICL exemplars")

    p_pert = sub.add_parser("perturb", help="robustness trials with perturbed prompts")
    _add_common(p_pert, kinds=("image",))
    p_pert.add_argument("--mode", default="box", choices=["point", "box", "mask"])
    p_pert.add_argument(
        "--resimulate-clicks",
        action="store_true",
        help="re-run the full click loop per trial instead of perturbing the recorded ideal clicks",
    )

    p_rep = sub.add_parser("report", help="re-aggregate existing per-sample CSV files")
    p_rep.add_argument("--per-sample", action="append", required=True, help="per-sample CSV (repeatable)")
    p_rep.add_argument("--out", required=True)
    return parser


# --------------------------------------------------------------------------
# segmenter wiring
# --------------------------------------------------------------------------

def _make_handle(spec: str, manifests: list[DatasetManifest], seed: int) -> SegmenterHandle:
    endpoint = os.environ.get("PROMPTSEG_ENDPOINT", spec)
    if endpoint.startswith("oracle:"):
        lookups = [gt_lookup_for(m) for m in manifests]

        def lookup(ref: str):
            last_error: Optional[Exception] = None
            for lk in lookups:
                try:
                    return lk(ref)
                except PromptsegError as exc:
                    last_error = exc
            raise last_error

        oracle = build_oracle(endpoint.split(":", 1)[1], lookup, seed=seed)
        return SegmenterHandle(LocalTransport(oracle))
    if endpoint.startswith("cmd:"):
        return SegmenterHandle(SubprocessTransport(shlex.split(endpoint[4:])))
    if endpoint.startswith(("http://", "https://")):
        return SegmenterHandle(HttpTransport(endpoint))
    raise PromptsegError(f"unrecognized segmenter spec {endpoint!r}")


def _scan_all(args) -> list[DatasetManifest]:
    manifests = [scan_dataset(root, args.kind, split=args.split) for root in args.dataset]
    for manifest in manifests:
        for warning in manifest.warnings:
            _warn(f"{manifest.name}: {warning}")
    return manifests


def _parse_metrics(raw: str) -> tuple[str, ...]:
    return tuple(name.strip() for name in raw.split(",") if name.strip())


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_eval(args) -> int:
    cfg = _build_config(args)
    run = RunSpec(
        dataset_roots=tuple(args.dataset),
        kind=args.kind,
        mode=args.mode,
        segmenter=args.segmenter,
        out_dir=args.out,
        config=cfg,
        strategy=args.strategy,
        k=args.k,
        metrics=_parse_metrics(args.metrics),
        train_root=args.train_dataset,
        limit=args.limit,
        jobs=args.jobs,
    )
    run.validate()
    manifests = _scan_all(args)
    handle = _make_handle(args.segmenter, manifests, cfg.rng_seed)
    handle.handshake()
    run.check_capabilities(handle.capabilities)

    train_pairs = None
    if run.mode == "icl":
        train_manifest = scan_dataset(run.train_root, "image", split="train")
        train_pairs = icl_pairs(train_manifest)

    reports = []
    hard_errors: list[str] = []
    sequence_index: dict[str, list] = {}
    for manifest in manifests:
        if run.kind == "image":
            result = evaluate_image_dataset(
                manifest,
                run.mode,
                handle,
                cfg,
                metric_names=run.metrics,
                limit=run.limit,
                jobs=run.jobs,
                train_pairs=train_pairs,
            )
        else:
            result = evaluate_sequence_dataset(
                manifest,
                run.strategy,
                run.mode,
                run.k,
                handle,
                cfg,
                metric_names=run.metrics,
                limit=run.limit,
                jobs=run.jobs,
            )
            sequence_index[manifest.name] = result.sequence_index
        reports.append(result.report)
        hard_errors.extend(f"{manifest.name}: {e}" for e in result.hard_errors)
    handle.close()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "per_sample.csv").write_bytes(per_sample_csv(reports))
    if sequence_index:
        (out / "sequences.json").write_bytes(
            (json.dumps(sequence_index, sort_keys=True, indent=2) + "\n").encode("utf-8")
        )
    cross = aggregate(reports, "cross_dataset_mean") if len(reports) > 1 else None
    (out / "aggregates.json").write_bytes(aggregates_json(reports, cross))
    write_run_manifest(
        out / "run_manifest.json",
        cfg.to_dict(),
        handle.identity,
        PROTOCOL_VERSION,
        run={
            "command": "eval",
            "datasets": [m.name for m in manifests],
            "kind": run.kind,
            "mode": run.mode,
            "strategy": run.strategy,
            "k": run.k,
            "metrics": list(run.metrics),
            "limit": run.limit,
            "hard_errors": hard_errors,
        },
    )
    render_aggregate_figure(reports, out / "figures" / "aggregates.png")
    for error in hard_errors:
        _warn(f"hard error: {error}")
    _warn(f"wrote {out / 'per_sample.csv'} and {out / 'aggregates.json'}")
    return 1 if hard_errors else 0


def cmd_perturb(args) -> int:
    cfg = _build_config(args)
    run = RunSpec(
        dataset_roots=tuple(args.dataset),
        kind="image",
        mode=args.mode,
        segmenter=args.segmenter,
        out_dir=args.out,
        config=cfg,
        metrics=_parse_metrics(args.metrics),
        limit=args.limit,
        jobs=args.jobs,
        resimulate_clicks=args.resimulate_clicks,
    )
    if run.mode not in ("point", "box", "mask"):
        raise PromptsegError("perturbation supports point, box, and mask modes")
    manifests = _scan_all(args)
    if len(manifests) != 1:
        raise PromptsegError("perturb runs one dataset at a time")
    manifest = manifests[0]
    handle = _make_handle(args.segmenter, manifests, cfg.rng_seed)
    handle.handshake()

    stats, events, ideal_report = perturb_image_dataset(
        manifest,
        run.mode,
        handle,
        cfg,
        metric_names=run.metrics,
        limit=run.limit,
        resimulate=run.resimulate_clicks,
    )
    handle.close()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ideal_per_sample.csv").write_bytes(per_sample_csv([ideal_report]))
    (out / "trials.csv").write_bytes(trials_csv(stats, dataset=manifest.name))
    (out / "trials.json").write_bytes(trials_json(stats, events, dataset=manifest.name))
    write_run_manifest(
        out / "run_manifest.json",
        cfg.to_dict(),
        handle.identity,
        PROTOCOL_VERSION,
        run={
            "command": "perturb",
            "datasets": [manifest.name],
            "kind": "image",
            "mode": run.mode,
            "metrics": list(run.metrics),
            "limit": run.limit,
            "resimulate_clicks": run.resimulate_clicks,
            "events": len(events),
        },
    )
    render_trials_figure(stats, out / "figures" / "trials.png", dataset=manifest.name)
    _warn(f"wrote {out / 'trials.csv'} ({len(events)} perturbation events logged)")
    return 0


def cmd_report(args) -> int:
    reports = []
    for path in args.per_sample:
        reports.extend(read_per_sample_csv(path))
    if not reports:
        raise PromptsegError("no reports found in the given per-sample files")
    cross = aggregate(reports, "cross_dataset_mean") if len(reports) > 1 else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "aggregates.json").write_bytes(aggregates_json(reports, cross))
    render_aggregate_figure(reports, out / "figures" / "aggregates.png")
    _warn(f"re-aggregated {len(reports)} dataset report(s) into {out / 'aggregates.json'}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "perturb":
            return cmd_perturb(args)
        return cmd_report(args)
    except PromptsegError as exc:
        _warn(str(exc))
        return 2
    except ValueError as exc:
        _warn(str(exc))
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
