"""Command-line entry point.

    seqlab --config demo.config [--status train|decode]
    seqlab throughput --config decode.config [--batch-sizes 1 8 64] [--json]
    seqlab viz weights.tsv [--out prefix] [--color red]

Exit status: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from .autodiff import TrainingError
from .config import ConfigError, load_config, parse_config
from .data import AlphabetError, BatchConfigError, FormatError, read_corpus
from .inference import EvaluationError
from .representation import RepresentationConfigError
from .training import (
    CheckpointError,
    decode,
    evaluate_model,
    load_checkpoint,
    load_provider,
    read_checkpoint,
    throughput_report,
    train,
)
from .viz import VizInputError, render_file

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
RUNTIME_ERRORS = (TrainingError, CheckpointError, FormatError, EvaluationError, AlphabetError, VizInputError,
                  BatchConfigError, OSError, ValueError, KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqlab", description="Configuration-driven sequence labeling and classification.")
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--status", choices=["train", "decode"], help="override the config's status")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    tp = sub.add_parser("throughput", help="decode speed per batch size")
    tp.add_argument("--config", dest="sub_config", required=True, help="config with model_dir and raw_dir")
    tp.add_argument("--batch-sizes", type=int, nargs="+", default=[1, 8, 64])
    tp.add_argument("--repeats", type=int, default=1)
    tp.add_argument("--json", action="store_true", help="print machine-readable rows instead of a table")

    vp = sub.add_parser("viz", help="render token<TAB>weight files as .tex and .html heatmaps")
    vp.add_argument("weights", help="two-column weight file")
    vp.add_argument("--out", help="output prefix (default: input path)")
    vp.add_argument("--color", default="red")
    return parser


def run_config(config_path: str, status: Optional[str]) -> int:
    config, pattern = load_config(config_path, status)
    if config.status == "train":
        result = train(config)
        for log in result.history:
            print(f"epoch {log.epoch:>3}  loss {log.loss:.4f}  lr {log.learning_rate:.5f}  "
                  f"dev {log.dev.main_metric:.4f}  ({log.seconds:.1f}s)")
        print(f"pattern {pattern.value}; best epoch {result.best_epoch} with dev metric {result.best_metric:.4f}")
        if config.test_dir:
            test = read_corpus(config.test_dir, config.sentence_classification)
            print("test:")
            print(evaluate_model(result.model, test, config.batch_size, config.tag_scheme).format())
        if config.model_dir:
            print(f"model saved to {config.model_dir}")
        return EXIT_OK
    result = decode(config)
    if result.report is not None:
        print(result.report.format())
    else:
        print(f"decoded {len(result.predictions)} sentences ({result.sentences_per_second:.1f} sentences/s)")
    print(f"output written to {config.decode_dir}")
    return EXIT_OK


def run_throughput(args) -> int:
    config = parse_config(args.sub_config)
    if not config.model_dir or not config.raw_dir:
        raise ConfigError("throughput needs model_dir and raw_dir")
    ckpt = read_checkpoint(config.model_dir)
    instances = read_corpus(config.raw_dir, ckpt.config.sentence_classification, labeled=None)
    provider = None
    if ckpt.provider is not None and ckpt.provider["kind"] == "file":
        provider = load_provider(ckpt.config if not config.provider_source else config, {config.raw_dir: instances})
    model = load_checkpoint(config.model_dir, provider)
    rows, table = throughput_report(model, instances, args.batch_sizes, args.repeats)
    print(json.dumps(rows, indent=2) if args.json else table)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        if args.command == "viz":
            tex, html_files = render_file(args.weights, args.out or args.weights, args.color)
            for path in tex + html_files:
                print(path)
            return EXIT_OK
        if args.command == "throughput":
            return run_throughput(args)
        if not args.config:
            raise UsageError("--config is required")
        return run_config(args.config, args.status)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"seqlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, RepresentationConfigError) as exc:
        print(f"seqlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        print(f"seqlab: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
