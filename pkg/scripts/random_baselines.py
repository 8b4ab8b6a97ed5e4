"""Chance-level values of the retrieval and modifier metrics for random embeddings."""

import argparse

import numpy as np

from augcap.evaluation import mut_score, text_to_audio_recall


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=500)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)

    ks = [1, 5, 10]
    recalls = np.array([
        text_to_audio_recall(rng.standard_normal((args.batch, args.dim)),
                             rng.standard_normal((args.batch, args.dim)), ks)
        for _ in range(args.trials)])
    for k, col in zip(ks, recalls.T):
        print(f"R@{k}: {col.mean():.3f} ± {col.std():.3f} (expected {100 * k / args.batch:.3f})")

    shape = (10_000, args.dim)
    score = mut_score(rng.standard_normal(shape), rng.standard_normal(shape), rng.standard_normal(shape))
    print(f"MUT, random model, B=10000: {score:.2f}% (expected 50)")


if __name__ == "__main__":
    main()
