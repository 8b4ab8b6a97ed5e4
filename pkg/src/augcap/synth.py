"""Synthetic strongly-labeled source corpus for tests and demos.

Each file is a 10 s recording containing several overlapping labeled events,
so many source clips point at segments of the same file, like a
temporally-strong labeling of real recordings.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from augcap.audio import AudioClip, save_wav
from augcap.preprocess import SourceClipMeta, write_source_manifest

LABELS = (
    "dog barking", "rain", "car driving", "siren", "bird song", "engine idling", "baby crying",
    "door slam", "bell", "thunder", "cat meowing", "music", "clock ticking", "train horn",
    "firecracker", "tree falling", "applause", "footsteps", "speech", "guitar",
)
EXCLUDED_LABELS = ("unknown", "background/environment")


def _event_sound(label_index: int, n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = 140.0 + 55.0 * label_index
    tone = sum(np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h for h in (1, 2, 3))
    tremolo = 0.6 + 0.4 * np.sin(2 * np.pi * (1.0 + label_index % 5) * t)
    noise = rng.standard_normal(n) * (0.3 if label_index % 4 == 1 else 0.05)
    fade = np.minimum(1.0, np.minimum(t, t[::-1]) / 0.05)
    return (tone * tremolo + noise) * fade


def make_synthetic_corpus(out_dir: str | Path, n_clips: int = 200, seed: int = 0,
                          clips_per_file: int = 10, file_seconds: float = 10.0,
                          sample_rate: int = 16000, excluded_rate: float = 0.03,
                          amplitude: float = 0.06) -> Path:
    """Write ``audio/*.wav`` plus a ``sources.jsonl`` source manifest; return the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_files = -(-n_clips // clips_per_file)
    file_len = int(round(file_seconds * sample_rate))
    metas = []
    for f in range(n_files):
        buf = np.zeros(file_len)
        rel = f"audio/rec_{f:05d}.wav"
        for e in range(min(clips_per_file, n_clips - f * clips_per_file)):
            duration = float(rng.uniform(1.5, 5.0))
            start = float(rng.uniform(0.0, file_seconds - duration))
            a, b = int(round(start * sample_rate)), int(round((start + duration) * sample_rate))
            label_index = int(rng.integers(len(LABELS)))
            buf[a:b] += amplitude * _event_sound(label_index, b - a, sample_rate, rng)
            if rng.random() < excluded_rate:
                labels = (EXCLUDED_LABELS[int(rng.integers(2))],)
            else:
                labels = (LABELS[label_index],)
            metas.append(SourceClipMeta(id=f"src-{f:05d}-{e:02d}", audio_path=rel, labels=labels,
                                        start_s=a / sample_rate, end_s=b / sample_rate))
        save_wav(AudioClip(buf, sample_rate), out_dir / rel)
    manifest = out_dir / "sources.jsonl"
    write_source_manifest(manifest, metas)
    return manifest
