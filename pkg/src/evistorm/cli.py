"""Command-line interface: generate-data, train, evaluate, compare, figures.

Exit codes by failure category: 0 success, 1 unexpected library error,
2 configuration, 3 data/ingest, 4 checkpoint/transfer, 5 training
divergence, 6 comparison/split mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import (
    CheckpointError,
    ConfigError,
    EvistormError,
    IngestError,
    ShapeError,
    SplitMismatchError,
    TrainingDivergedError,
    TransferError,
)
from .harness.config import ExperimentConfig
from .harness.evaluation import compare, evaluate
from .harness.figures import make_figures
from .harness.training import train
from .stormdata import export_events, generate, split_events, window, write_manifest

log = logging.getLogger("evistorm")

_EXIT_CODES = (
    (TrainingDivergedError, 5),
    (SplitMismatchError, 6),
    (CheckpointError, 4),
    (TransferError, 4),
    (IngestError, 3),
    (ShapeError, 3),
    (ConfigError, 2),
    (EvistormError, 1),
)


def _load_config(args, out_overrides_run_dir: bool = False) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        config.training.seed = args.seed
    if getattr(args, "variant", None) is not None:
        config.variant = args.variant
        if config.variant not in ("edl", "p-edl", "ensemble", "mc-dropout"):
            raise ConfigError(f"unknown variant {config.variant!r}")
    # for train, --out moves the run directory; for evaluate it names the
    # report directory and the run directory stays as configured
    if out_overrides_run_dir and getattr(args, "out", None) is not None:
        config.out_dir = args.out
    return config


def _cmd_generate_data(args) -> int:
    config = ExperimentConfig.load(args.config)
    data = config.data
    if data.synthetic is None:
        raise ConfigError("generate-data requires a synthetic data section")
    if args.seed is not None:
        data.synthetic.seed = args.seed
    out = Path(args.out or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events = generate(data.synthetic)
    raw_path = out / "events.evst"
    export_events(raw_path, events, max_value=255)
    splits = split_events(len(events), data.split_seed, data.split_ratios)
    samples = window(events, stride=data.window_stride)
    write_manifest(out / "manifest.txt", {
        "format": "EVST1",
        "n_events": str(len(events)),
        "n_samples": str(len(samples)),
        "frames_per_event": str(events[0].n_frames),
        "height": str(events[0].spatial_shape[0]),
        "width": str(events[0].spatial_shape[1]),
        "generator_seed": str(data.synthetic.seed),
        "split_seed": str(data.split_seed),
        "split_hash": splits.hash(),
        "train_events": ",".join(map(str, splits.train)),
        "val_events": ",".join(map(str, splits.val)),
        "test_events": ",".join(map(str, splits.test)),
    })
    log.info("wrote %d events to %s", len(events), raw_path)
    print(raw_path)
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args, out_overrides_run_dir=True)
    result = train(config)
    log.info("trained variant %s (split %s)", config.variant, result.split_hash)
    for path in result.checkpoint_paths:
        print(path)
    return 0


def _cmd_evaluate(args) -> int:
    config = _load_config(args)
    report_dir = args.out or str(Path(config.out_dir) / "report")
    report = evaluate(
        config,
        report_dir,
        checkpoint_dir=args.checkpoint_dir,
        profile_repeats=args.repeats,
    )
    log.info("evaluated %s on split %s", report.variant, report.split_hash)
    print(report_dir)
    return 0


def _cmd_compare(args) -> int:
    paths = compare(args.reports, args.out)
    for path in paths.values():
        print(path)
    return 0


def _cmd_figures(args) -> int:
    written = make_figures(args.comparison, args.out, report_dir=args.report)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evistorm",
        description="Evidential storm-nowcasting workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="generate a synthetic event file + manifest")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the generator seed")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("train", help="train one variant")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", default=None,
                   choices=["edl", "p-edl", "ensemble", "mc-dropout"])
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="run the metric battery on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint-dir", default=None,
                   help="directory holding checkpoints (default: config out_dir)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="report directory")
    p.add_argument("--repeats", type=int, default=10, help="timing repeats")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="side-by-side tables from several reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("figures", help="SVG figures from a comparison directory")
    p.add_argument("--comparison", required=True)
    p.add_argument("--report", default=None,
                   help="report directory supplying error/uncertainty maps")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_figures)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EvistormError as exc:
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                log.error("%s", exc)
                return code
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
