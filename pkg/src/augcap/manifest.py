"""JSONL dataset manifests: one header line, then one record per line."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from augcap.composer import AugmentationPlan, canonical_json

SCHEMA = "augcap.manifest"
SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass
class DatasetRecord:
    id: str
    audio_path: str
    plan: AugmentationPlan
    caption: str | None = None
    caption_status: str = "pending"
    keywords: list[str] = field(default_factory=list)
    hard_negative_of: str | None = None
    split: str = "train"

    def __post_init__(self):
        if not self.keywords:
            self.keywords = self.plan.keywords()
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    @property
    def plan_hash(self) -> str:
        return self.plan.hash()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "audio_path": self.audio_path,
            "caption": self.caption,
            "caption_status": self.caption_status,
            "plan": self.plan.to_dict(),
            "plan_hash": self.plan_hash,
            "keywords": list(self.keywords),
            "hard_negative_of": self.hard_negative_of,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        return cls(id=d["id"], audio_path=d["audio_path"], plan=AugmentationPlan.from_dict(d["plan"]),
                   caption=d.get("caption"), caption_status=d.get("caption_status", "pending"),
                   keywords=list(d.get("keywords", [])), hard_negative_of=d.get("hard_negative_of"),
                   split=d.get("split", "train"))


@dataclass
class Manifest:
    header: dict
    records: list[DatasetRecord]

    def by_id(self) -> dict[str, DatasetRecord]:
        return {r.id: r for r in self.records}


def assign_split(record_id: str, seed: int, fractions: tuple[float, float] = (0.9, 0.05)) -> str:
    digest = hashlib.blake2b(f"{seed}:{record_id}".encode(), digest_size=8).digest()
    u = int.from_bytes(digest, "big") / 2**64
    if u < fractions[0]:
        return "train"
    return "val" if u < fractions[0] + fractions[1] else "test"


def read_manifest(path: str | Path) -> Manifest:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA:
        raise ValueError(f"{path}: not a {SCHEMA} file")
    if header.get("version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {header.get('version')}")
    return Manifest(header, [DatasetRecord.from_dict(json.loads(ln)) for ln in lines[1:]])


def write_manifest(path: str | Path, manifest: Manifest) -> None:
    """Write atomically: a crash leaves either the old or the new file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(canonical_json({"schema": SCHEMA, "version": SCHEMA_VERSION, **manifest.header}) + "\n")
        for record in manifest.records:
            fh.write(canonical_json(record.to_dict()) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def validate_manifest(path: str | Path) -> list[str]:
    """Integrity errors: duplicate ids, missing audio, dangling links, stale plan hashes."""
    path = Path(path)
    errors: list[str] = []
    with open(path, encoding="utf-8") as fh:
        raw = [json.loads(ln) for ln in fh if ln.strip()]
    manifest = read_manifest(path)
    ids = [r.id for r in manifest.records]
    seen: set[str] = set()
    for rid in ids:
        if rid in seen:
            errors.append(f"duplicate id {rid}")
        seen.add(rid)
    for rec, d in zip(manifest.records, raw[1:]):
        if not (path.parent / rec.audio_path).is_file():
            errors.append(f"{rec.id}: missing audio {rec.audio_path}")
        if rec.hard_negative_of is not None and rec.hard_negative_of not in seen:
            errors.append(f"{rec.id}: hard_negative_of {rec.hard_negative_of} does not exist")
        if d.get("plan_hash") != rec.plan_hash:
            errors.append(f"{rec.id}: plan_hash does not match plan")
        if rec.caption_status == "accepted" and not rec.caption:
            errors.append(f"{rec.id}: accepted without a caption")
    return errors


def manifest_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def iter_captions(records: Iterable[DatasetRecord], accepted_only: bool = True) -> list[str]:
    return [r.caption for r in records
            if r.caption and (r.caption_status == "accepted" or not accepted_only)]
