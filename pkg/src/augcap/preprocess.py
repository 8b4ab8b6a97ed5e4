"""Duration- and class-based filtering of the source corpus."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

DEFAULT_EXCLUDED = frozenset({"background/environment", "unknown"})


@dataclass(frozen=True)
class SourceClipMeta:
    id: str
    audio_path: str
    labels: tuple[str, ...]
    start_s: float
    end_s: float

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise ValueError(f"clip {self.id!r} has no labels")
        if not (0 <= self.start_s < self.end_s):
            raise ValueError(f"clip {self.id!r} has invalid span [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def sound(self) -> str:
        return ", ".join(self.labels)

    def to_dict(self) -> dict:
        return {"id": self.id, "audio_path": self.audio_path, "labels": list(self.labels),
                "start_s": self.start_s, "end_s": self.end_s}

    @classmethod
    def from_dict(cls, d: dict) -> "SourceClipMeta":
        return cls(id=str(d["id"]), audio_path=str(d["audio_path"]), labels=tuple(d["labels"]),
                   start_s=float(d["start_s"]), end_s=float(d["end_s"]))


def _norm(label: str) -> str:
    return label.strip().casefold()


@dataclass(frozen=True)
class FilterPolicy:
    min_duration_s: float = 2.0
    excluded_labels: frozenset[str] = field(default_factory=lambda: DEFAULT_EXCLUDED)

    def __post_init__(self):
        if self.min_duration_s <= 0:
            raise ValueError("min_duration_s must be positive")
        object.__setattr__(self, "excluded_labels", frozenset(_norm(x) for x in self.excluded_labels))


@dataclass(frozen=True)
class Accept:
    accepted = True


@dataclass(frozen=True)
class Reject:
    reason: str
    accepted = False


def filter_source(meta: SourceClipMeta, policy: FilterPolicy = FilterPolicy()) -> Accept | Reject:
    if meta.duration_s < policy.min_duration_s:
        return Reject("duration")
    if any(_norm(label) in policy.excluded_labels for label in meta.labels):
        return Reject("class")
    return Accept()


def filter_corpus(metas: Iterable[SourceClipMeta], policy: FilterPolicy = FilterPolicy()
                  ) -> tuple[list[SourceClipMeta], dict[str, int]]:
    """Return accepted clips sorted by id, plus rejection counts per reason."""
    accepted = []
    counts = {"duration": 0, "class": 0}
    for meta in metas:
        verdict = filter_source(meta, policy)
        if verdict.accepted:
            accepted.append(meta)
        else:
            counts[verdict.reason] += 1
    accepted.sort(key=lambda m: m.id)
    return accepted, counts


def read_source_manifest(path: str | Path) -> Iterator[SourceClipMeta]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield SourceClipMeta.from_dict(json.loads(line))


def write_source_manifest(path: str | Path, metas: Iterable[SourceClipMeta]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for meta in metas:
            fh.write(json.dumps(meta.to_dict(), sort_keys=True) + "\n")
