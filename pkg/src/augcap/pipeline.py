"""End-to-end dataset commands: generate, caption, negatives, eval, features, validate."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from augcap.audio import PIPELINE_RATE, AudioClip, load_wav, resample, save_wav
from augcap.captioner import (
    DEFAULT_INSTRUCTION,
    MAX_BATCH,
    CaptionBackend,
    CaptionQuery,
    PostprocessPolicy,
    RetryPolicy,
    backend_from_config,
    generate_many,
    postprocess_caption,
)
from augcap.composer import PlanParams, execute_plan, sample_plan
from augcap.dsp import logmel
from augcap.errors import BackendError, CorpusTooSmall, DimensionMismatch, MissingIds
from augcap.evaluation import (
    CATEGORIES,
    ModifierLexicon,
    flip_modifiers,
    mdt_recall,
    modifier_categories,
    modifier_stats,
    mut_score,
    text_to_audio_recall,
)
from augcap.manifest import (
    DatasetRecord,
    Manifest,
    assign_split,
    iter_captions,
    read_manifest,
    validate_manifest,
    write_manifest,
)
from augcap.matrix_io import read_matrix, write_csv, write_matrix
from augcap.negatives import (
    HardNegativePair,
    hard_negative_plan,
    is_eligible,
    reversible_kinds,
    select_negative_injections,
)
from augcap.preprocess import FilterPolicy, SourceClipMeta, filter_corpus, read_source_manifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


def derive_seed(root: int, *keys) -> int:
    """Stable 63-bit seed for (root, keys...), independent of processing order."""
    payload = ":".join(str(k) for k in (root, *keys)).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big") >> 1


class SourceLoader:
    """Loads source clips (a labeled segment of a WAV file) at the pipeline rate."""

    def __init__(self, metas: Iterable[SourceClipMeta], base_dir: str | Path, cache_size: int = 128):
        self.metas = {m.id: m for m in metas}
        self.base_dir = Path(base_dir)
        self._load_file = lru_cache(maxsize=cache_size)(self._read)

    def _read(self, path: str) -> AudioClip:
        return resample(load_wav(self.base_dir / path), PIPELINE_RATE)

    def __call__(self, clip_id: str) -> AudioClip:
        meta = self.metas[clip_id]
        full = self._load_file(meta.audio_path)
        a = int(round(meta.start_s * PIPELINE_RATE))
        b = min(int(round(meta.end_s * PIPELINE_RATE)), len(full))
        return AudioClip(full.samples[a:b], PIPELINE_RATE)


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError as exc:
            raise ValueError("TOML configs need Python 3.11+; use JSON instead") from exc
        return tomllib.loads(text)
    return json.loads(text)


def _sources_from_header(manifest_path: Path, header: dict) -> SourceLoader:
    src = Path(header["source_manifest"])
    if not src.is_absolute():
        src = manifest_path.parent / src
    return SourceLoader(read_source_manifest(src), src.parent)


def cmd_generate(source_manifest: str | Path, out_dir: str | Path, count: int, seed: int = 0,
                 p_t: float = 0.3, p_c: float = 0.2, workers: int = 1,
                 policy: FilterPolicy = FilterPolicy()) -> Path:
    source_manifest = Path(source_manifest).resolve()
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    metas = list(read_source_manifest(source_manifest))
    corpus, rejected = filter_corpus(metas, policy)
    logger.info("sources: %d read, %d accepted, rejected %s", len(metas), len(corpus), rejected)
    params = PlanParams(p_t=p_t, p_c=p_c)
    if len(corpus) < params.max_clips:
        raise CorpusTooSmall(f"only {len(corpus)} sources survive filtering")
    loader = SourceLoader(corpus, source_manifest.parent)

    def build(index: int) -> DatasetRecord:
        rid = f"mix-{index:06d}"
        plan = sample_plan(np.random.default_rng(derive_seed(seed, index)), corpus, params)
        audio, _ = execute_plan(plan, loader)
        rel = f"audio/{rid}.wav"
        save_wav(audio, out_dir / rel)
        return DatasetRecord(id=rid, audio_path=rel, plan=plan, split=assign_split(rid, seed))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(build, range(count)))
    else:
        records = [build(i) for i in range(count)]

    header = {
        "kind": "dataset",
        "source_manifest": str(source_manifest),
        "params": {"p_t": p_t, "p_c": p_c, "count": count, "seed": seed},
        "filter": {"min_duration_s": policy.min_duration_s,
                   "excluded_labels": sorted(policy.excluded_labels)},
        "stats": {"sources_read": len(metas), "sources_accepted": len(corpus),
                  "rejected_duration": rejected["duration"], "rejected_class": rejected["class"]},
    }
    path = out_dir / MANIFEST_NAME
    write_manifest(path, Manifest(header, records))
    return path


def _caption_settings(config: dict):
    pp = config.get("postprocess", {})
    policy = PostprocessPolicy(int(pp.get("min_words", 6)), int(pp.get("max_words", 45)))
    retry = RetryPolicy(**config.get("retry", {}))
    batch_size = int(config.get("batch_size", MAX_BATCH))
    if not 1 <= batch_size <= MAX_BATCH:
        raise ValueError(f"batch_size must be in [1, {MAX_BATCH}]")
    return policy, retry, batch_size, int(config.get("max_in_flight", 1)), config.get("prompt", DEFAULT_INSTRUCTION)


def caption_records(records: Sequence[DatasetRecord], backend: CaptionBackend, config: dict,
                    on_progress=None) -> None:
    """Caption pending records in place, calling ``on_progress`` after each wave of batches."""
    policy, retry, batch_size, in_flight, instruction = _caption_settings(config)
    pending = [r for r in records if r.caption_status == "pending"]
    batches = [pending[i:i + batch_size] for i in range(0, len(pending), batch_size)]
    for w in range(0, len(batches), max(in_flight, 1)):
        wave = batches[w:w + max(in_flight, 1)]
        queries = [CaptionQuery([r.plan.descriptors() for r in batch], f"{batch[0].id}+{len(batch)}")
                   for batch in wave]
        results = generate_many(queries, backend, retry, instruction, in_flight)
        for batch, query in zip(wave, queries):
            for record, raw in zip(batch, results[query.batch_id]):
                verdict = postprocess_caption(raw, policy)
                record.caption = verdict.caption
                record.caption_status = "accepted" if verdict.accepted else verdict.reason
        if on_progress is not None:
            on_progress()


def cmd_caption(manifest_path: str | Path, config: dict | None = None,
                backend: CaptionBackend | None = None) -> Path:
    """Caption every pending record. Progress is persisted after each wave, so a
    failed run can be resumed without re-requesting finished records."""
    config = config or {}
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    backend = backend or backend_from_config(config)
    try:
        caption_records(manifest.records, backend, config,
                        on_progress=lambda: write_manifest(manifest_path, manifest))
    except BackendError:
        write_manifest(manifest_path, manifest)
        raise
    counts: dict[str, int] = {}
    for r in manifest.records:
        counts[r.caption_status] = counts.get(r.caption_status, 0) + 1
    manifest.header["caption_stats"] = dict(sorted(counts.items()))
    write_manifest(manifest_path, manifest)
    return manifest_path


def cmd_negatives(manifest_path: str | Path, count: int | None = None, fraction: float | None = None,
                  seed: int = 0, config: dict | None = None,
                  backend: CaptionBackend | None = None) -> list[HardNegativePair]:
    """Add captioned hard-negative records for a random subset of eligible records.

    Existing negatives are discarded first, so re-running with the same
    arguments reproduces the same manifest.
    """
    config = config or {}
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    out_dir = manifest_path.parent
    for stale in (r for r in manifest.records if r.hard_negative_of is not None):
        (out_dir / stale.audio_path).unlink(missing_ok=True)
    positives = [r for r in manifest.records if r.hard_negative_of is None]

    eligible = []
    for r in positives:
        if is_eligible(r.plan):
            eligible.append(r.id)
        else:
            logger.info("skipping %s: no reversible transform", r.id)
    if count is None:
        count = int(round((fraction if fraction is not None else 1.0) * len(eligible)))
    rng = np.random.default_rng(derive_seed(seed, "negatives"))
    picks = select_negative_injections([r.id for r in positives], count, rng, eligible=set(eligible))

    loader = _sources_from_header(manifest_path, manifest.header)
    by_id = {r.id: r for r in positives}
    negatives, pairs = [], []
    for pid in picks:
        positive = by_id[pid]
        plan = hard_negative_plan(positive.plan)
        audio, _ = execute_plan(plan, loader)
        nid = f"{pid}-neg"
        rel = f"audio/{nid}.wav"
        save_wav(audio, out_dir / rel)
        negatives.append(DatasetRecord(id=nid, audio_path=rel, plan=plan, hard_negative_of=pid,
                                       split=positive.split))
        pairs.append(HardNegativePair(pid, nid, reversible_kinds(positive.plan)))

    caption_records(negatives, backend or backend_from_config(config), config)
    manifest.records = positives + negatives
    manifest.header["negatives"] = {"count": len(negatives), "seed": seed,
                                    "eligible": len(eligible)}
    write_manifest(manifest_path, manifest)
    return pairs


def cmd_validate(manifest_path: str | Path) -> list[str]:
    return validate_manifest(manifest_path)


def cmd_features(inputs: Sequence[str | Path], out_dir: str | Path, with_csv: bool = False) -> list[Path]:
    """Log-mel features for WAV files, or for every record of a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wavs: list[tuple[str, Path]] = []
    for item in map(Path, inputs):
        if item.suffix == ".jsonl":
            wavs += [(r.id, item.parent / r.audio_path) for r in read_manifest(item).records]
        else:
            wavs.append((item.stem, item))
    written = []
    for name, wav in wavs:
        clip = resample(load_wav(wav), PIPELINE_RATE)
        feats = logmel(clip)
        path = out_dir / f"{name}.f32"
        write_matrix(path, feats.frames, {"source": str(wav), "frame_hop": feats.frame_hop,
                                          "sample_rate": PIPELINE_RATE, "kind": "logmel"})
        if with_csv:
            write_csv(out_dir / f"{name}.csv", feats.frames)
        written.append(path)
    return written


def write_embeddings(path: str | Path, matrix: np.ndarray, row_ids: Sequence[str],
                     captions: Sequence[str] | None = None) -> None:
    meta: dict = {"row_ids": list(row_ids), "kind": "embedding"}
    if captions is not None:
        meta["captions"] = list(captions)
    write_matrix(path, matrix, meta)


def _load_embeddings(path, role: str) -> tuple[np.ndarray, dict]:
    if path is None:
        raise MissingIds(f"missing input: {role} embeddings are required for the requested metrics")
    return read_matrix(path)


def cmd_eval(audio_path, text_path, report_path=None, metrics: Iterable[str] = ("recall",),
             k_list: Sequence[int] = (1, 5, 10), flipped_path=None,
             captions: Sequence[str] | None = None,
             lexicon: ModifierLexicon | None = None) -> dict:
    """Compute the requested metrics from precomputed embeddings.

    ``metrics`` is a subset of {recall, mut, mdt, stats}. Rows are matched by
    the ``row_ids`` in each sidecar; captions come from ``captions`` or the
    text sidecar and drive modifier categories.
    """
    metrics = set(metrics)
    unknown = metrics - {"recall", "mut", "mdt", "stats"}
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    lexicon = lexicon or ModifierLexicon()
    blocks: list[dict] = []

    captions = list(captions) if captions is not None else None
    audio = text = None
    if metrics & {"recall", "mut", "mdt"}:
        audio, a_meta = _load_embeddings(audio_path, "audio")
        text, t_meta = _load_embeddings(text_path, "text")
        if audio.shape != text.shape:
            raise DimensionMismatch(f"audio {audio.shape} vs text {text.shape}")
        a_ids, t_ids = a_meta.get("row_ids"), t_meta.get("row_ids")
        if a_ids is not None and t_ids is not None and a_ids != t_ids:
            missing = sorted(set(a_ids) ^ set(t_ids))
            raise MissingIds(f"audio/text row ids differ: {missing[:10] or 'ordering'}")
        if captions is None:
            captions = t_meta.get("captions")
    elif captions is None and text_path is not None:
        captions = read_matrix(text_path)[1].get("captions")

    k_list = list(k_list)
    if "recall" in metrics:
        for k, v in zip(k_list, text_to_audio_recall(audio, text, k_list)):
            blocks.append({"metric": "recall", "k": k, "value": v})

    categories = None
    if captions is not None:
        if audio is not None and len(captions) != len(audio):
            raise MissingIds(f"{len(captions)} captions for {len(audio)} embedding rows")
        categories = [modifier_categories(c, lexicon) for c in captions]

    if "mut" in metrics:
        flipped, f_meta = _load_embeddings(flipped_path, "text-flipped")
        if flipped.shape != text.shape:
            raise MissingIds(f"flipped embeddings {flipped.shape} do not match text {text.shape}")
        if f_meta.get("row_ids") is not None and t_meta.get("row_ids") is not None \
                and f_meta["row_ids"] != t_meta["row_ids"]:
            raise MissingIds("text-flipped row ids differ from text row ids")
        blocks.append({"metric": "mut", "category": "all", "value": mut_score(audio, text, flipped)})
        if categories is not None:
            for cat in CATEGORIES:
                rows = [i for i, cs in enumerate(categories) if cat in cs]
                if rows:
                    blocks.append({"metric": "mut", "category": cat, "n": len(rows),
                                   "value": mut_score(audio[rows], text[rows], flipped[rows])})

    if "mdt" in metrics:
        rows = list(range(len(audio))) if categories is None else \
            [i for i, cs in enumerate(categories) if cs]
        ks = [k for k in k_list if k <= len(rows)]
        if rows:
            for k, v in zip(ks, mdt_recall(audio[rows], text[rows], ks)):
                blocks.append({"metric": "mdt", "k": k, "n": len(rows), "value": v})

    if "stats" in metrics:
        if captions is None:
            raise MissingIds("missing input: captions are required for modifier stats")
        for cat, (n, pct) in modifier_stats(captions, lexicon).items():
            blocks.append({"metric": "modifier_stats", "category": cat, "count": n, "value": pct})

    report = {"metrics": blocks}
    if report_path is not None:
        Path(report_path).write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report


def report_csv(report: dict, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "k_or_category", "value"])
        for b in report["metrics"]:
            writer.writerow([b["metric"], b.get("k", b.get("category")), f"{b['value']:.3f}"])


def flipped_captions(captions: Sequence[str], lexicon: ModifierLexicon | None = None) -> list[str]:
    lexicon = lexicon or ModifierLexicon()
    return [flip_modifiers(c, lexicon)[0] for c in captions]


def manifest_captions(manifest_path: str | Path) -> list[str]:
    return iter_captions(read_manifest(manifest_path).records)
