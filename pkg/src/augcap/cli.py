"""Command-line entry point.

Exit codes: 0 ok, 1 usage, 2 data error, 3 caption backend error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from augcap import pipeline
from augcap.errors import BackendError, DataError
from augcap.preprocess import FilterPolicy

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k expects comma-separated integers, got {text!r}")
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("--k values must be positive")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="augcap", description="Augmented audio-caption dataset tooling")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample and render augmented clips")
    g.add_argument("sources", help="source clip manifest (JSONL)")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--p-t", type=float, default=0.3, help="per-(clip, transform) probability")
    g.add_argument("--p-c", type=float, default=0.2, help="probability that a junction is a mix")
    g.add_argument("--min-duration", type=float, default=2.0)
    g.add_argument("--exclude", action="append", default=None, metavar="LABEL",
                   help="excluded label (repeatable); defaults to background/environment, unknown")
    g.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("caption", help="caption pending records (resumable)")
    c.add_argument("manifest")
    c.add_argument("--backend", choices=["offline", "http"])
    c.add_argument("--config", help="JSON (or TOML on Python 3.11+) config file")

    n = sub.add_parser("negatives", help="add hard-negative records")
    n.add_argument("manifest")
    amount = n.add_mutually_exclusive_group()
    amount.add_argument("--count", type=int)
    amount.add_argument("--fraction", type=float)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--backend", choices=["offline", "http"])
    n.add_argument("--config")

    e = sub.add_parser("eval", help="retrieval and modifier metrics from embeddings")
    e.add_argument("--audio", help="audio embedding matrix")
    e.add_argument("--text", help="caption embedding matrix")
    e.add_argument("--text-flipped", help="flipped-caption embedding matrix (for mut)")
    e.add_argument("--captions", help="manifest JSONL or text file with one caption per line")
    e.add_argument("--metrics", default="recall", help="comma-separated: recall,mut,mdt,stats")
    e.add_argument("--k", type=_k_list, default=[1, 5, 10])
    e.add_argument("--out", required=True, help="report JSON path")
    e.add_argument("--csv", help="optional CSV export of the report")

    f = sub.add_parser("features", help="log-mel features for WAVs or a manifest")
    f.add_argument("inputs", nargs="+")
    f.add_argument("--out", required=True)
    f.add_argument("--csv", action="store_true", help="also write CSV copies")

    v = sub.add_parser("validate", help="check manifest integrity")
    v.add_argument("manifest")
    return parser


def _config(args) -> dict:
    config = pipeline.load_config(getattr(args, "config", None))
    if getattr(args, "backend", None):
        config["backend"] = args.backend
    return config


def _read_captions(path: str) -> list[str]:
    if path.endswith(".jsonl"):
        return pipeline.manifest_captions(path)
    with open(path, encoding="utf-8") as fh:
        return [ln.rstrip("\n") for ln in fh if ln.strip()]


def run(args) -> int:
    if args.command == "generate":
        policy = FilterPolicy(args.min_duration, frozenset(args.exclude)) if args.exclude \
            else FilterPolicy(args.min_duration)
        path = pipeline.cmd_generate(args.sources, args.out, args.count, args.seed,
                                     args.p_t, args.p_c, args.workers, policy)
        print(path)
    elif args.command == "caption":
        print(pipeline.cmd_caption(args.manifest, _config(args)))
    elif args.command == "negatives":
        pairs = pipeline.cmd_negatives(args.manifest, args.count, args.fraction, args.seed, _config(args))
        print(f"{len(pairs)} hard negatives linked")
    elif args.command == "eval":
        metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
        captions = _read_captions(args.captions) if args.captions else None
        report = pipeline.cmd_eval(args.audio, args.text, args.out, metrics, args.k,
                                   args.text_flipped, captions)
        if args.csv:
            pipeline.report_csv(report, args.csv)
        print(json.dumps(report, indent=2))
    elif args.command == "features":
        for path in pipeline.cmd_features(args.inputs, args.out, args.csv):
            print(path)
    elif args.command == "validate":
        errors = pipeline.cmd_validate(args.manifest)
        for err in errors:
            print(err)
        print(f"{len(errors)} integrity errors")
        return EXIT_DATA if errors else EXIT_OK
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
