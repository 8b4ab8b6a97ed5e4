"""Generate, caption and add hard negatives in one go, then report modifier stats.

    python scripts/run_pipeline.py corpus/sources.jsonl runs/demo --count 500
"""

import argparse
import logging
import time

from augcap import pipeline
from augcap.evaluation import ModifierLexicon, modifier_stats
from augcap.manifest import iter_captions, read_manifest


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("sources")
    parser.add_argument("out_dir")
    parser.add_argument("--count", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--negative-fraction", type=float, default=0.25)
    parser.add_argument("--config", help="caption backend config (JSON)")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    config = pipeline.load_config(args.config)
    timings = {}
    t0 = time.perf_counter()
    path = pipeline.cmd_generate(args.sources, args.out_dir, args.count, args.seed, workers=args.workers)
    timings["generate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    pipeline.cmd_caption(path, config)
    timings["caption"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    pairs = pipeline.cmd_negatives(path, fraction=args.negative_fraction, seed=args.seed, config=config)
    timings["negatives"] = time.perf_counter() - t0

    manifest = read_manifest(path)
    errors = pipeline.cmd_validate(path)
    print(f"manifest: {path}")
    print(f"records: {len(manifest.records)} ({len(pairs)} hard negatives), integrity errors: {len(errors)}")
    print("stage seconds: " + ", ".join(f"{k} {v:.1f}" for k, v in timings.items()))
    print(f"source stats: {manifest.header['stats']}")
    print(f"caption stats: {manifest.header.get('caption_stats')}")
    captions = iter_captions(manifest.records)
    for cat, (n, pct) in modifier_stats(captions, ModifierLexicon()).items():
        print(f"  {cat:<9} {n:6d} ({pct:.1f}%)")


if __name__ == "__main__":
    main()
