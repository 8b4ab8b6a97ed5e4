"""Write a synthetic labeled source corpus (WAVs + sources.jsonl)."""

import argparse

from augcap.synth import make_synthetic_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--clips", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--excluded-rate", type=float, default=0.03,
                        help="fraction of clips labeled with an excluded class")
    args = parser.parse_args()
    path = make_synthetic_corpus(args.out_dir, n_clips=args.clips, seed=args.seed,
                                 excluded_rate=args.excluded_rate)
    print(path)


if __name__ == "__main__":
    main()
