"""Stochastic augmentation plans and their execution into 10-second clips."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from augcap.audio import AudioClip, pad_or_truncate
from augcap.dsp import (
    PITCH_RANGE,
    SNR_RANGE,
    SPEED_RANGE,
    TRANSFORM_ORDER,
    VOLUME_MAGNITUDE_RANGE,
    DURATION_FACTOR,
    CombineKind,
    CombineSpec,
    TransformKind,
    TransformSpec,
    apply_transform,
    combine,
)
from augcap.errors import CorpusTooSmall, MissingSource
from augcap.preprocess import SourceClipMeta

MAX_CLIPS = 5
OUTPUT_SECONDS = 10.0
BACKGROUND = "background"


@dataclass(frozen=True)
class PlanParams:
    p_t: float = 0.3
    p_c: float = 0.2
    max_clips: int = MAX_CLIPS

    def __post_init__(self):
        if not (0 <= self.p_t <= 1 and 0 <= self.p_c <= 1):
            raise ValueError("p_t and p_c must be probabilities")
        if not 1 <= self.max_clips <= MAX_CLIPS:
            raise ValueError(f"max_clips must be in [1, {MAX_CLIPS}]")


@dataclass(frozen=True)
class EventDescriptor:
    sound: str
    description: tuple[str, ...]
    order: int

    def to_dict(self) -> dict:
        return {"sound": self.sound, "description": list(self.description), "order": self.order}

    @classmethod
    def from_dict(cls, d: dict) -> "EventDescriptor":
        return cls(d["sound"], tuple(d["description"]), int(d["order"]))


def assign_order(combines: Sequence[CombineSpec]) -> list[int]:
    orders = [0]
    for spec in combines:
        orders.append(orders[-1] + (0 if CombineKind(spec.kind) is CombineKind.MIX else 1))
    return orders


@dataclass(frozen=True)
class AugmentationPlan:
    """Full recipe for one dataset item.

    ``sounds`` holds each source clip's joined labels so captions can be
    built from the plan alone.
    """

    seed: int
    source_ids: tuple[str, ...]
    sounds: tuple[str, ...]
    per_clip_transforms: tuple[tuple[TransformSpec, ...], ...]
    combines: tuple[CombineSpec, ...]
    orders: tuple[int, ...] = field(default=())

    def __post_init__(self):
        n = len(self.source_ids)
        object.__setattr__(self, "source_ids", tuple(self.source_ids))
        object.__setattr__(self, "sounds", tuple(self.sounds))
        object.__setattr__(self, "per_clip_transforms", tuple(tuple(t) for t in self.per_clip_transforms))
        object.__setattr__(self, "combines", tuple(self.combines))
        if not self.orders:
            object.__setattr__(self, "orders", tuple(assign_order(self.combines)))
        if not 1 <= n <= MAX_CLIPS:
            raise ValueError(f"plan must have 1..{MAX_CLIPS} clips, got {n}")
        if len(self.sounds) != n or len(self.per_clip_transforms) != n or len(self.combines) != n - 1:
            raise ValueError("plan fields are not index-aligned")
        if tuple(self.orders) != tuple(assign_order(self.combines)):
            raise ValueError(f"orders {self.orders} inconsistent with combines")
        for transforms in self.per_clip_transforms:
            kinds = [t.kind for t in transforms]
            if len(set(kinds)) != len(kinds):
                raise ValueError("at most one transform per kind per clip")
        object.__setattr__(self, "orders", tuple(int(o) for o in self.orders))

    @property
    def n(self) -> int:
        return len(self.source_ids)

    def descriptors(self) -> list[EventDescriptor]:
        """One descriptor per clip; the noise side of every mix is marked as background."""
        out = []
        for i, (sound, transforms) in enumerate(zip(self.sounds, self.per_clip_transforms)):
            words: list[str] = []
            if i > 0 and self.combines[i - 1].kind is CombineKind.MIX:
                words.append(BACKGROUND)
            for t in sorted(transforms, key=lambda t: TRANSFORM_ORDER.index(t.kind)):
                words.extend(t.keywords)
            out.append(EventDescriptor(sound, tuple(words), self.orders[i]))
        return out

    def keywords(self) -> list[str]:
        return [w for d in self.descriptors() for w in d.description]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "source_ids": list(self.source_ids),
            "sounds": list(self.sounds),
            "per_clip_transforms": [[t.to_dict() for t in ts] for ts in self.per_clip_transforms],
            "combines": [c.to_dict() for c in self.combines],
            "orders": list(self.orders),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationPlan":
        return cls(
            seed=int(d["seed"]),
            source_ids=tuple(d["source_ids"]),
            sounds=tuple(d["sounds"]),
            per_clip_transforms=tuple(tuple(TransformSpec.from_dict(t) for t in ts)
                                      for ts in d["per_clip_transforms"]),
            combines=tuple(CombineSpec.from_dict(c) for c in d["combines"]),
            orders=tuple(d["orders"]),
        )

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _draw_transform(kind: TransformKind, rng: np.random.Generator) -> TransformSpec:
    if kind is TransformKind.VOLUME:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return TransformSpec(kind, sign * rng.uniform(*VOLUME_MAGNITUDE_RANGE))
    if kind is TransformKind.PITCH:
        return TransformSpec(kind, rng.uniform(*PITCH_RANGE))
    if kind is TransformKind.SPEED:
        return TransformSpec(kind, rng.uniform(*SPEED_RANGE))
    return TransformSpec(kind, DURATION_FACTOR)


def sample_plan(rng: np.random.Generator, corpus: Sequence[SourceClipMeta],
                params: PlanParams = PlanParams()) -> AugmentationPlan:
    if len(corpus) < params.max_clips:
        raise CorpusTooSmall(f"need at least {params.max_clips} accepted clips, got {len(corpus)}")
    seed = int(rng.integers(0, 2**63 - 1))
    n = int(rng.integers(1, params.max_clips + 1))
    picks = rng.choice(len(corpus), size=n, replace=False)
    clips = [corpus[int(i)] for i in picks]

    transforms = []
    for _ in clips:
        chosen = [kind for kind in TRANSFORM_ORDER if rng.random() < params.p_t]
        transforms.append(tuple(_draw_transform(kind, rng) for kind in chosen))

    combines = []
    for _ in range(n - 1):
        if rng.random() < params.p_c:
            combines.append(CombineSpec(CombineKind.MIX, snr_db=rng.uniform(*SNR_RANGE),
                                        offset_fraction=rng.random()))
        else:
            combines.append(CombineSpec(CombineKind.CONCATENATE))

    return AugmentationPlan(
        seed=seed,
        source_ids=tuple(c.id for c in clips),
        sounds=tuple(c.sound for c in clips),
        per_clip_transforms=tuple(transforms),
        combines=tuple(combines),
    )


ClipLoader = Callable[[str], AudioClip]


def render_clip(plan: AugmentationPlan, index: int, clip: AudioClip) -> AudioClip:
    # each clip gets its own stream so a negative plan reuses the same draws
    rng = np.random.default_rng([plan.seed, index])
    for spec in sorted(plan.per_clip_transforms[index], key=lambda t: TRANSFORM_ORDER.index(t.kind)):
        clip = apply_transform(clip, spec, rng)
    return clip


def execute_plan_unpadded(plan: AugmentationPlan, loader: ClipLoader) -> AudioClip:
    acc = None
    for i, source_id in enumerate(plan.source_ids):
        try:
            clip = loader(source_id)
        except (KeyError, FileNotFoundError) as exc:
            raise MissingSource(f"cannot load source clip {source_id!r}: {exc}") from exc
        clip = render_clip(plan, i, clip)
        acc = clip if acc is None else combine(acc, clip, plan.combines[i - 1])
    return acc


def execute_plan(plan: AugmentationPlan, loader: ClipLoader,
                 seconds: float = OUTPUT_SECONDS) -> tuple[AudioClip, list[EventDescriptor]]:
    """Render the plan and normalize the result to ``seconds`` (once, at the end)."""
    out = pad_or_truncate(execute_plan_unpadded(plan, loader), seconds)
    return out, plan.descriptors()
