"""Augmented audio-caption dataset generation and embedding-level evaluation."""

from augcap.audio import AudioClip, load_wav, pad_or_truncate, resample, save_wav

__all__ = ["AudioClip", "load_wav", "save_wav", "resample", "pad_or_truncate"]
__version__ = "0.1.0"
