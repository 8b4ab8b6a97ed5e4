"""Hard negatives: the same events with every reversible transform reversed."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Collection, Sequence

import numpy as np

from augcap.composer import AugmentationPlan
from augcap.dsp import TransformKind, TransformSpec, keyword_for
from augcap.errors import NoInvertibleTransforms, NotEnoughEligible

ANTONYMS = {
    "loud": "quiet", "quiet": "loud",
    "high-pitch": "low-pitch", "low-pitch": "high-pitch",
    "fast": "slow", "slow": "fast",
}


@dataclass(frozen=True)
class HardNegativePair:
    positive: str
    negative: str
    reversed_kinds: frozenset[TransformKind]


def invert_transform(t: TransformSpec) -> TransformSpec:
    """Negate volume/pitch, take the reciprocal speed; duration is returned unchanged."""
    if t.kind is TransformKind.DURATION:
        return t
    if t.kind is TransformKind.SPEED:
        parameter = 1.0 / t.parameter
    else:
        parameter = -t.parameter
    keywords = tuple(ANTONYMS.get(k, k) for k in t.keywords)
    if keyword_for(t.kind, parameter) not in keywords:
        # rate exactly 1.0 (or gain/pitch 0) has no opposite keyword direction
        keywords = (keyword_for(t.kind, parameter),)
    return TransformSpec(t.kind, parameter, keywords)


def reversible_kinds(plan: AugmentationPlan) -> frozenset[TransformKind]:
    return frozenset(t.kind for ts in plan.per_clip_transforms for t in ts if t.invertible)


def is_eligible(plan: AugmentationPlan) -> bool:
    return bool(reversible_kinds(plan))


def hard_negative_plan(plan: AugmentationPlan) -> AugmentationPlan:
    if not is_eligible(plan):
        raise NoInvertibleTransforms("plan has no volume, pitch or speed transform to reverse")
    transforms = tuple(tuple(invert_transform(t) for t in ts) for ts in plan.per_clip_transforms)
    return replace(plan, per_clip_transforms=transforms)


def select_negative_injections(batch_ids: Sequence[str], c: int, rng: np.random.Generator,
                               eligible: Collection[str] | None = None) -> list[str]:
    """Uniformly pick ``c`` distinct eligible ids from a minibatch, in batch order."""
    pool = [i for i in batch_ids if eligible is None or i in eligible]
    if c < 0:
        raise ValueError("c must be nonnegative")
    if c > len(pool):
        raise NotEnoughEligible(f"requested {c} negatives but only {len(pool)} eligible items")
    if c == 0:
        return []
    picks = np.sort(rng.choice(len(pool), size=c, replace=False))
    return [pool[int(i)] for i in picks]
