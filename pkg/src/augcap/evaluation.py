"""Embedding-level retrieval and modifier-understanding metrics.

Similarities are dot products ``S[i, j] = a_i . t_j`` (audio rows, text
columns). Retrieval functions treat rows as queries with the diagonal as
ground truth, so text-to-audio recall is computed on ``S.T``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from augcap.errors import DimensionMismatch

CATEGORIES = ("Duration", "Pitch", "Speed", "Volume")


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    audio: np.ndarray
    text: np.ndarray
    pair_groups: tuple = ()

    def __post_init__(self):
        a = np.asarray(self.audio, dtype=np.float64)
        t = np.asarray(self.text, dtype=np.float64)
        if a.ndim != 2 or t.ndim != 2 or a.shape != t.shape or a.shape[1] < 1:
            raise DimensionMismatch(f"audio {a.shape} and text {t.shape} must both be B x D")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(t))):
            raise ValueError("embeddings must be finite")
        groups = tuple(self.pair_groups) if len(self.pair_groups) else tuple(range(len(a)))
        if len(groups) != len(a):
            raise DimensionMismatch(f"{len(groups)} group ids for {len(a)} rows")
        object.__setattr__(self, "audio", a)
        object.__setattr__(self, "text", t)
        object.__setattr__(self, "pair_groups", groups)


def similarity_matrix(E: EmbeddingSet) -> np.ndarray:
    return E.audio @ E.text.T


def build_mask(pair_groups: Sequence) -> np.ndarray:
    """0 where two different rows share a group, 1 elsewhere (diagonal always 1)."""
    codes: dict = {}
    g = np.array([codes.setdefault(x, len(codes)) for x in pair_groups], dtype=np.int64)
    mask = np.where(g[:, None] == g[None, :], 0.0, 1.0)
    np.fill_diagonal(mask, 1.0)
    return mask


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.07

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def _masked_log_softmax_diag(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # logsumexp with multiplicative weights is max-subtracted internally
    return np.diag(logits) - logsumexp(logits, axis=1, b=mask)


def _check_loss_inputs(S, M, tau):
    S = np.asarray(S, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape != M.shape:
        raise DimensionMismatch(f"S {S.shape} and M {M.shape} must be equal square matrices")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if not np.all(np.diag(M) == 1):
        raise ValueError("mask diagonal must be all ones")
    return S, M


def info_nce_loss(S, M, tau: float) -> tuple[float, float, float]:
    """Masked symmetric InfoNCE; returns (L, L_TA, L_AT) with L = L_TA + L_AT."""
    S, M = _check_loss_inputs(S, M, tau)
    logits = S / tau
    l_ta = -float(np.mean(_masked_log_softmax_diag(logits, M)))
    l_at = -float(np.mean(_masked_log_softmax_diag(logits.T, M.T)))
    return l_ta + l_at, l_ta, l_at


def _masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    w = mask * np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def info_nce_grad(S, M, tau: float) -> np.ndarray:
    """Gradient of L with respect to S."""
    S, M = _check_loss_inputs(S, M, tau)
    B = S.shape[0]
    logits = S / tau
    eye = np.eye(B)
    grad_ta = _masked_softmax(logits, M) - eye
    grad_at = (_masked_softmax(logits.T, M.T) - eye).T
    return (grad_ta + grad_at) / (B * tau)


def diagonal_ranks(S) -> np.ndarray:
    """0-based rank of S[i, i] in row i, ties resolved in favor of lower column index."""
    S = np.asarray(S, dtype=np.float64)
    diag = np.diag(S)[:, None]
    cols = np.arange(S.shape[1])[None, :]
    rows = np.arange(S.shape[0])[:, None]
    ahead = (S > diag) | ((S == diag) & (cols < rows))
    return ahead.sum(axis=1)


def recall_at_k(S, k: int) -> float:
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"expected a square similarity matrix, got {S.shape}")
    if not 1 <= k <= S.shape[0]:
        raise ValueError(f"k={k} outside [1, {S.shape[0]}]")
    return 100.0 * int(np.count_nonzero(diagonal_ranks(S) < k)) / S.shape[0]


def text_to_audio_recall(audio, text, k_list: Iterable[int]) -> list[float]:
    S = np.asarray(text, dtype=np.float64) @ np.asarray(audio, dtype=np.float64).T
    return [recall_at_k(S, k) for k in k_list]


def mdt_recall(audio, text, k_list: Iterable[int]) -> list[float]:
    """Text-to-audio recall with every row of the (modifier) test set as the retrieval pool."""
    audio = np.asarray(audio, dtype=np.float64)
    text = np.asarray(text, dtype=np.float64)
    if audio.shape != text.shape:
        raise DimensionMismatch(f"audio {audio.shape} vs text {text.shape}")
    return text_to_audio_recall(audio, text, k_list)


def mut_score(audio, text_orig, text_flipped) -> float:
    """Percent of rows where the flipped caption scores strictly higher than the original."""
    a = np.asarray(audio, dtype=np.float64)
    to = np.asarray(text_orig, dtype=np.float64)
    tf = np.asarray(text_flipped, dtype=np.float64)
    if not a.shape == to.shape == tf.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape}, {to.shape}, {tf.shape}")
    if len(a) == 0:
        return 0.0
    closer = np.einsum("ij,ij->i", a, tf) > np.einsum("ij,ij->i", a, to)
    return 100.0 * float(np.mean(closer))


# Modifier lexicon ---------------------------------------------------------------

DEFAULT_PAIRS: dict[str, list[tuple[str, str]]] = {
    "Volume": [("loud", "quiet"), ("loudly", "quietly"), ("louder", "quieter")],
    "Speed": [("fast", "slow"), ("quickly", "slowly"), ("rapidly", "gradually")],
    "Pitch": [("high-pitched", "low-pitched"), ("high-pitch", "low-pitch"), ("shrill", "deep")],
    "Duration": [("short", "long"), ("brief", "prolonged"), ("briefly", "lengthily")],
}


@dataclass(frozen=True)
class ModifierLexicon:
    """Antonym pairs per modifier category; each word may appear only once."""

    categories: Mapping[str, Sequence[tuple[str, str]]] = field(default_factory=lambda: DEFAULT_PAIRS)

    def __post_init__(self):
        antonym: dict[str, str] = {}
        category: dict[str, str] = {}
        for cat, pairs in self.categories.items():
            for a, b in pairs:
                a, b = a.lower(), b.lower()
                for w in (a, b):
                    if w in antonym:
                        raise ValueError(f"{w!r} appears in more than one antonym pair")
                antonym[a], antonym[b] = b, a
                category[a] = category[b] = cat
        object.__setattr__(self, "_antonym", antonym)
        object.__setattr__(self, "_category", category)

    def antonym(self, word: str) -> str | None:
        return self._antonym.get(word.lower())

    def category(self, word: str) -> str | None:
        return self._category.get(word.lower())

    @property
    def names(self) -> list[str]:
        return list(self.categories)


_WORD = re.compile(r"[A-Za-z]+(?:-[A-Za-z]+)*")


def modifier_categories(caption: str, lexicon: ModifierLexicon) -> set[str]:
    return {c for w in _WORD.findall(caption) if (c := lexicon.category(w))}


def flip_modifiers(caption: str, lexicon: ModifierLexicon) -> tuple[str, set[str]]:
    hit: set[str] = set()

    def swap(m: re.Match) -> str:
        word = m.group(0)
        opposite = lexicon.antonym(word)
        if opposite is None:
            return word
        hit.add(lexicon.category(word))
        if word[0].isupper():
            opposite = opposite[0].upper() + opposite[1:]
        return opposite

    return _WORD.sub(swap, caption), hit


def modifier_stats(captions: Sequence[str], lexicon: ModifierLexicon) -> dict[str, tuple[int, float]]:
    counts = dict.fromkeys(lexicon.names, 0)
    for caption in captions:
        for cat in modifier_categories(caption, lexicon):
            counts[cat] += 1
    total = len(captions)
    return {cat: (n, 100.0 * n / total if total else 0.0) for cat, n in counts.items()}
