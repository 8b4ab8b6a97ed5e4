"""Per-clip transforms, clip combination, and log-mel features.

Time stretching is a phase vocoder over a Hann-windowed STFT (1024-point
FFT, hop 256, zero-padded centered frames). Pitch shifting stretches by the
pitch ratio and then resamples back to the original length, so duration is
preserved while every frequency is scaled by ``2 ** octaves``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window, resample_poly

from augcap.audio import PIPELINE_RATE, AudioClip
from augcap.errors import ClipTooShort, RateMismatch, SilentInput

PV_N_FFT = 1024
PV_HOP = 256

MEL_N_FFT = 1024
MEL_HOP = 160
MEL_BINS = 64
LOG_EPS = 1e-10

GAP_SECONDS = 0.5
SNR_RANGE = (-5.0, 5.0)
VOLUME_MAGNITUDE_RANGE = (0.5, 1.0)
PITCH_RANGE = (-0.5, 0.5)
SPEED_RANGE = (0.8, 1.2)
DURATION_FACTOR = 0.5


class TransformKind(str, Enum):
    VOLUME = "volume"
    PITCH = "pitch"
    SPEED = "speed"
    DURATION = "duration"


# execution order within a clip
TRANSFORM_ORDER = (TransformKind.VOLUME, TransformKind.PITCH, TransformKind.SPEED,
                   TransformKind.DURATION)


class CombineKind(str, Enum):
    CONCATENATE = "concatenate"
    MIX = "mix"


def keyword_for(kind: TransformKind, parameter: float) -> str:
    if kind is TransformKind.VOLUME:
        return "loud" if parameter >= 0 else "quiet"
    if kind is TransformKind.PITCH:
        return "high-pitch" if parameter >= 0 else "low-pitch"
    if kind is TransformKind.SPEED:
        return "fast" if parameter >= 1 else "slow"
    return "short"


def _in_range(x: float, lo: float, hi: float, tol: float = 1e-12) -> bool:
    return lo - tol <= x <= hi + tol


@dataclass(frozen=True)
class TransformSpec:
    """One per-clip augmentation.

    ``parameter`` is gain in dB for volume, octaves for pitch, the stretch
    rate for speed and the kept fraction (0.5) for duration. Speed accepts
    [0.8, 1.25] so reciprocal rates from hard-negative inversion stay valid.
    """

    kind: TransformKind
    parameter: float
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        kind = TransformKind(self.kind)
        object.__setattr__(self, "kind", kind)
        p = float(self.parameter)
        object.__setattr__(self, "parameter", p)
        if not self.keywords:
            object.__setattr__(self, "keywords", (keyword_for(kind, p),))
        else:
            object.__setattr__(self, "keywords", tuple(self.keywords))
        ok = {
            TransformKind.VOLUME: _in_range(abs(p), *VOLUME_MAGNITUDE_RANGE),
            TransformKind.PITCH: _in_range(p, *PITCH_RANGE),
            TransformKind.SPEED: _in_range(p, SPEED_RANGE[0], 1 / SPEED_RANGE[0]),
            TransformKind.DURATION: p == DURATION_FACTOR,
        }[kind]
        if not ok:
            raise ValueError(f"{kind.value} parameter {p} out of range")
        if keyword_for(kind, p) not in self.keywords:
            raise ValueError(f"keywords {self.keywords} inconsistent with {kind.value}={p}")

    @property
    def invertible(self) -> bool:
        return self.kind is not TransformKind.DURATION

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "parameter": self.parameter, "keywords": list(self.keywords)}

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        return cls(TransformKind(d["kind"]), d["parameter"], tuple(d["keywords"]))


@dataclass(frozen=True)
class CombineSpec:
    """How clip i is joined onto the accumulated clips 0..i-1.

    For mixes the offset is stored as a fraction of the accumulated length,
    since that length is only known once the plan is executed.
    """

    kind: CombineKind
    snr_db: float | None = None
    offset_fraction: float | None = None
    gap_s: float | None = None

    def __post_init__(self):
        kind = CombineKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is CombineKind.MIX:
            if self.snr_db is None or not _in_range(self.snr_db, *SNR_RANGE):
                raise ValueError(f"mix snr_db {self.snr_db} outside {SNR_RANGE}")
            if self.offset_fraction is None or not 0 <= self.offset_fraction < 1:
                raise ValueError(f"offset_fraction {self.offset_fraction} outside [0, 1)")
            object.__setattr__(self, "gap_s", None)
        else:
            if self.gap_s is None:
                object.__setattr__(self, "gap_s", GAP_SECONDS)
            if self.gap_s != GAP_SECONDS:
                raise ValueError(f"concatenation gap must be {GAP_SECONDS} s")
            object.__setattr__(self, "snr_db", None)
            object.__setattr__(self, "offset_fraction", None)

    def offset_samples(self, accumulated_len: int) -> int:
        return int(np.floor(self.offset_fraction * accumulated_len))

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.kind is CombineKind.MIX:
            d.update(snr_db=self.snr_db, offset_fraction=self.offset_fraction)
        else:
            d["gap_s"] = self.gap_s
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CombineSpec":
        return cls(CombineKind(d["kind"]), d.get("snr_db"), d.get("offset_fraction"), d.get("gap_s"))


def apply_gain(clip: AudioClip, gain_db: float) -> AudioClip:
    if not np.isfinite(gain_db):
        raise ValueError("gain_db must be finite")
    return AudioClip(clip.samples * 10.0 ** (gain_db / 20.0), clip.sample_rate)


def _stft(x: np.ndarray, window: np.ndarray, hop: int) -> np.ndarray:
    n_fft = len(window)
    padded = np.pad(x, n_fft // 2)
    frames = sliding_window_view(padded, n_fft)[::hop]
    return np.fft.rfft(frames * window, axis=1).T


def _istft(spec: np.ndarray, window: np.ndarray, hop: int, length: int) -> np.ndarray:
    n_fft = len(window)
    frames = np.fft.irfft(spec.T, n=n_fft, axis=1) * window
    n_frames = frames.shape[0]
    total = n_fft + hop * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    win_sq = window ** 2
    for i in range(n_frames):
        s = i * hop
        out[s:s + n_fft] += frames[i]
        norm[s:s + n_fft] += win_sq
    nonzero = norm > 1e-8
    out[nonzero] /= norm[nonzero]
    out = out[n_fft // 2:]
    if len(out) >= length:
        return out[:length]
    return np.concatenate([out, np.zeros(length - len(out))])


def _phase_vocoder(x: np.ndarray, rate: float, n_fft: int = PV_N_FFT, hop: int = PV_HOP) -> np.ndarray:
    """Stretch ``x`` to round(len(x) / rate) samples without changing pitch."""
    if len(x) < n_fft:
        raise ClipTooShort(f"clip of {len(x)} samples is shorter than the {n_fft}-sample window")
    window = get_window("hann", n_fft)
    spec = _stft(x, window, hop)
    n_bins, n_frames = spec.shape
    steps = np.arange(0, n_frames, rate)
    spec = np.pad(spec, ((0, 0), (0, 2)))

    idx = steps.astype(int)
    alpha = (steps - idx)[None, :]
    left, right = spec[:, idx], spec[:, idx + 1]
    mag = (1 - alpha) * np.abs(left) + alpha * np.abs(right)

    expected = 2 * np.pi * hop * np.arange(n_bins) / n_fft
    dphase = np.angle(right) - np.angle(left) - expected[:, None]
    dphase -= 2 * np.pi * np.round(dphase / (2 * np.pi))
    increments = expected[:, None] + dphase
    phase = np.angle(spec[:, 0])[:, None] + np.concatenate(
        [np.zeros((n_bins, 1)), np.cumsum(increments[:, :-1], axis=1)], axis=1)

    stretched = mag * np.exp(1j * phase)
    return _istft(stretched, window, hop, int(round(len(x) / rate)))


def time_stretch(clip: AudioClip, rate: float) -> AudioClip:
    """Change duration by 1/rate while preserving pitch.

    Rates in [0.5, 2] are accepted, which covers the [0.8, 1.2] augmentation
    range, its reciprocals, and the stretch factors pitch shifting needs.
    """
    if not 0.5 <= rate <= 2.0:
        raise ValueError(f"rate {rate} outside [0.5, 2]")
    return AudioClip(_phase_vocoder(clip.samples, rate), clip.sample_rate)


def pitch_shift(clip: AudioClip, octaves: float) -> AudioClip:
    if not _in_range(octaves, *PITCH_RANGE):
        raise ValueError(f"octaves {octaves} outside {PITCH_RANGE}")
    if len(clip) < PV_N_FFT:
        raise ClipTooShort(f"clip of {len(clip)} samples is shorter than the {PV_N_FFT}-sample window")
    if octaves == 0:
        return clip
    ratio = Fraction(2.0 ** octaves).limit_denominator(100)
    stretched = _phase_vocoder(clip.samples, 1 / float(ratio))
    # playing the stretched signal back ratio-times faster scales all frequencies by ratio
    shifted = resample_poly(stretched, ratio.denominator, ratio.numerator)
    n = len(clip)
    if len(shifted) >= n:
        shifted = shifted[:n]
    else:
        shifted = np.concatenate([shifted, np.zeros(n - len(shifted))])
    return AudioClip(shifted, clip.sample_rate)


def halve_duration(clip: AudioClip, rng: np.random.Generator) -> AudioClip:
    n = len(clip)
    if n < 2:
        raise ValueError("halve_duration needs at least 2 samples")
    half = n // 2
    start = int(rng.integers(0, n - half + 1))
    return AudioClip(clip.samples[start:start + half], clip.sample_rate)


def apply_transform(clip: AudioClip, spec: TransformSpec, rng: np.random.Generator) -> AudioClip:
    if spec.kind is TransformKind.VOLUME:
        return apply_gain(clip, spec.parameter)
    if spec.kind is TransformKind.PITCH:
        return pitch_shift(clip, spec.parameter)
    if spec.kind is TransformKind.SPEED:
        return time_stretch(clip, spec.parameter)
    return halve_duration(clip, rng)


def _check_rates(a: AudioClip, b: AudioClip) -> None:
    if a.sample_rate != b.sample_rate:
        raise RateMismatch(f"{a.sample_rate} Hz vs {b.sample_rate} Hz")


def concat_with_silence(c1: AudioClip, c2: AudioClip, gap_s: float = GAP_SECONDS) -> AudioClip:
    _check_rates(c1, c2)
    gap = np.zeros(int(round(gap_s * c1.sample_rate)))
    return AudioClip(np.concatenate([c1.samples, gap, c2.samples]), c1.sample_rate)


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x)))) if len(x) else 0.0


def mix_at_snr(signal: AudioClip, noise: AudioClip, snr_db: float, offset_samples: int) -> AudioClip:
    """Add ``noise`` into ``signal`` starting at ``offset_samples``.

    The noise gain is set so that the signal-to-scaled-noise RMS ratio over
    the overlapping region equals ``snr_db``. When the overlap is empty or
    silent on either side, whole-clip RMS values are used instead.
    """
    _check_rates(signal, noise)
    if not _in_range(snr_db, *SNR_RANGE):
        raise ValueError(f"snr_db {snr_db} outside {SNR_RANGE}")
    if not 0 <= offset_samples <= len(signal):
        raise ValueError(f"offset {offset_samples} outside [0, {len(signal)}]")
    s, n = signal.samples, noise.samples
    if rms(s) == 0 or rms(n) == 0:
        raise SilentInput("cannot define SNR with a silent input")

    overlap = min(len(s) - offset_samples, len(n))
    s_rms = rms(s[offset_samples:offset_samples + overlap])
    n_rms = rms(n[:overlap])
    if s_rms == 0 or n_rms == 0:
        s_rms, n_rms = rms(s), rms(n)
    gain = s_rms / (n_rms * 10.0 ** (snr_db / 20.0))

    out = np.zeros(max(len(s), offset_samples + len(n)))
    out[:len(s)] += s
    out[offset_samples:offset_samples + len(n)] += gain * n
    return AudioClip(out, signal.sample_rate)


def combine(acc: AudioClip, clip: AudioClip, spec: CombineSpec) -> AudioClip:
    if spec.kind is CombineKind.CONCATENATE:
        return concat_with_silence(acc, clip, spec.gap_s)
    return mix_at_snr(acc, clip, spec.snr_db, spec.offset_samples(len(acc)))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    frames: np.ndarray
    frame_hop: int = MEL_HOP

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != MEL_BINS:
            raise ValueError(f"expected T x {MEL_BINS} frames, got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("feature values must be finite")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int = PIPELINE_RATE, n_fft: int = MEL_N_FFT, n_mels: int = MEL_BINS,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters on the HTK mel scale, peak weight 1, shape (n_mels, n_fft // 2 + 1)."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def logmel(clip: AudioClip) -> FeatureMatrix:
    """Log mel power spectrogram: Hamming 1024, hop 160, 64 bins over 0-8 kHz.

    Frames are not center-padded, so there are 1 + (len - 1024) // 160 of them.
    """
    if clip.sample_rate != PIPELINE_RATE:
        raise RateMismatch(f"logmel expects {PIPELINE_RATE} Hz, got {clip.sample_rate} Hz")
    if len(clip) < MEL_N_FFT:
        raise ClipTooShort(f"clip of {len(clip)} samples is shorter than {MEL_N_FFT}")
    window = get_window("hamming", MEL_N_FFT)
    frames = sliding_window_view(clip.samples, MEL_N_FFT)[::MEL_HOP]
    power = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    mel = power @ mel_filterbank().T
    return FeatureMatrix(np.log(mel + LOG_EPS), MEL_HOP)
