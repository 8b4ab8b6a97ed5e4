"""Monte-Carlo check of the plan sampler against its configured distributions."""

import argparse
import time

import numpy as np
from scipy import stats

from augcap.composer import PlanParams, sample_plan
from augcap.dsp import CombineKind, TransformKind
from augcap.preprocess import SourceClipMeta


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--plans", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--p-t", type=float, default=0.3)
    parser.add_argument("--p-c", type=float, default=0.2)
    args = parser.parse_args()

    corpus = [SourceClipMeta(f"s{i}", "x.wav", ("dog",), 0.0, 3.0) for i in range(500)]
    params = PlanParams(p_t=args.p_t, p_c=args.p_c)
    rng = np.random.default_rng(args.seed)
    t0 = time.perf_counter()
    plans = [sample_plan(rng, corpus, params) for _ in range(args.plans)]
    print(f"{args.plans} plans in {time.perf_counter() - t0:.1f}s")

    n = np.array([len(p.source_ids) for p in plans])
    print("n frequencies:", np.round(np.bincount(n, minlength=6)[1:] / len(plans), 4).tolist())
    values = {k: [] for k in TransformKind}
    for p in plans:
        for clip in p.per_clip_transforms:
            for t in clip:
                values[t.kind].append(t.parameter)
    for kind in TransformKind:
        print(f"P({kind.value}) per clip: {len(values[kind]) / n.sum():.4f}")
    combines = [c for p in plans for c in p.combines]
    mixes = [c.snr_db for c in combines if c.kind is CombineKind.MIX]
    print(f"P(mix) per junction: {len(mixes) / len(combines):.4f}")

    uniform = {
        "|volume dB|": (np.abs(values[TransformKind.VOLUME]), 0.5, 1.0),
        "pitch oct": (values[TransformKind.PITCH], -0.5, 0.5),
        "speed": (values[TransformKind.SPEED], 0.8, 1.2),
        "snr dB": (mixes, -5.0, 5.0),
    }
    for name, (v, lo, hi) in uniform.items():
        ks = stats.kstest(v, stats.uniform(lo, hi - lo).cdf)
        print(f"{name:<12} range [{np.min(v):.3f}, {np.max(v):.3f}]  KS D={ks.statistic:.4f} p={ks.pvalue:.3f}")


if __name__ == "__main__":
    main()
