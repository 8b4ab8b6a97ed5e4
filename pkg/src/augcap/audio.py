"""Audio container, WAV I/O, resampling and length normalization.

Samples are kept as float64 in [-1, 1]. WAV input accepts 16-bit PCM and
32-bit IEEE float with any channel count (downmixed by mean); output is
always 16-bit PCM mono.
"""

from __future__ import annotations

import logging
import struct
import wave
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from augcap.errors import CorruptHeader, NotWav, UnsupportedEncoding

logger = logging.getLogger(__name__)

PIPELINE_RATE = 16000

_FORMAT_PCM = 0x0001
_FORMAT_FLOAT = 0x0003
_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = self.samples
        # read-only float64 arrays are already frozen and can be shared
        if not (isinstance(samples, np.ndarray) and samples.dtype == np.float64
                and not samples.flags.writeable):
            samples = np.array(samples, dtype=np.float64)
            samples.setflags(write=False)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate

    @classmethod
    def silence(cls, seconds: float, sample_rate: int = PIPELINE_RATE) -> "AudioClip":
        return cls(np.zeros(int(round(seconds * sample_rate))), sample_rate)


def _read_chunks(data: bytes) -> dict[bytes, bytes]:
    if len(data) < 12 or data[:4] not in (b"RIFF", b"RIFX") or data[8:12] != b"WAVE":
        raise NotWav("missing RIFF/WAVE signature")
    if data[:4] == b"RIFX":
        raise UnsupportedEncoding("big-endian RIFX files are not supported")
    chunks: dict[bytes, bytes] = {}
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body_start = pos + 8
        if size == 0xFFFFFFFF and chunk_id == b"data":
            size = len(data) - body_start
        if body_start + size > len(data):
            raise CorruptHeader(f"chunk {chunk_id!r} declares {size} bytes past end of file")
        chunks.setdefault(chunk_id, data[body_start:body_start + size])
        pos = body_start + size + (size & 1)
    return chunks


def load_wav(path: str | Path) -> AudioClip:
    """Read a WAV file into a mono clip.

    16-bit integers are scaled by 1/32768, so 32767 maps to 0.999969...
    """
    data = Path(path).read_bytes()
    chunks = _read_chunks(data)
    fmt = chunks.get(b"fmt ")
    if fmt is None or len(fmt) < 16:
        raise CorruptHeader("missing or truncated fmt chunk")
    if b"data" not in chunks:
        raise CorruptHeader("missing data chunk")
    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == _FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise CorruptHeader("truncated WAVE_FORMAT_EXTENSIBLE header")
        (tag,) = struct.unpack("<H", fmt[24:26])
    if channels == 0 or rate == 0:
        raise CorruptHeader(f"invalid header: channels={channels}, rate={rate}")

    raw = chunks[b"data"]
    if tag == _FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _FORMAT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedEncoding(f"format tag {tag:#06x} with {bits} bits per sample")
    if block_align != channels * dtype.itemsize:
        raise CorruptHeader(f"block_align {block_align} inconsistent with {channels}x{bits}-bit")

    n_frames = len(raw) // block_align
    frames = np.frombuffer(raw[:n_frames * block_align], dtype=dtype).reshape(n_frames, channels)
    samples = frames.astype(np.float64).mean(axis=1) * scale
    if not np.all(np.isfinite(samples)):
        raise CorruptHeader("non-finite float samples")
    return AudioClip(samples, rate)


def save_wav(clip: AudioClip, path: str | Path) -> None:
    """Write ``clip`` as 16-bit PCM mono, hard-clipping to [-1, 1]."""
    if len(clip) == 0:
        raise ValueError("cannot save an empty clip")
    samples = clip.samples
    n_clipped = int(np.count_nonzero(np.abs(samples) > 1.0))
    if n_clipped:
        logger.warning("clipped %d of %d samples while saving %s", n_clipped, len(samples), path)
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(pcm.tobytes())


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited rate conversion.

    Uses polyphase filtering with a Kaiser-windowed sinc (beta 5.0, the
    scipy default), with the rate ratio reduced to lowest terms. Output
    length is ceil(len * target / source).
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    ratio = Fraction(int(target_rate), clip.sample_rate)
    out = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    return AudioClip(out, target_rate)


def pad_or_truncate(clip: AudioClip, target_seconds: float) -> AudioClip:
    """Trailing-zero pad or prefix-truncate to exactly round(target_seconds * rate) samples."""
    if target_seconds <= 0:
        raise ValueError(f"target_seconds must be positive, got {target_seconds}")
    target = int(round(target_seconds * clip.sample_rate))
    n = len(clip)
    if n == target:
        return clip
    if n > target:
        return AudioClip(clip.samples[:target], clip.sample_rate)
    return AudioClip(np.concatenate([clip.samples, np.zeros(target - n)]), clip.sample_rate)
