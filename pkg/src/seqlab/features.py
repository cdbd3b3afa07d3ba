"""Hashed lexical features and the linear emission encoder.

The encoder replaces a contextual text encoder with a stand-in that stays
desk-scale: sparse window features hashed into a fixed table of size D
(a power of two), scored by a trainable D x L weight matrix.  Hashing uses a
fixed 64-bit digest so feature ids are stable across runs and machines;
collisions are accepted silently, as usual for hashed features.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

DEFAULT_HASH_DIM = 1 << 18
TEMPLATE_VERSION = "window1-v1"

_BOS = "<s>"
_EOS = "</s>"


def _h64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def _shape(token: str) -> str:
    out: List[str] = []
    for c in token:
        if c.isdigit():
            k = "0"
        elif c.isalpha():
            k = "X" if c.isupper() else "x"
        else:
            k = "#"
        if not out or out[-1] != k:
            out.append(k)
    return "".join(out)


def _templates(tokens: Sequence[str], i: int) -> List[str]:
    tok = tokens[i]
    low = tok.lower()
    prev = tokens[i - 1].lower() if i > 0 else _BOS
    nxt = tokens[i + 1].lower() if i + 1 < len(tokens) else _EOS
    feats = [
        "t=" + tok,
        "l=" + low,
        "p2=" + low[:2],
        "p3=" + low[:3],
        "s2=" + low[-2:],
        "s3=" + low[-3:],
        "sh=" + _shape(tok),
        "pv=" + prev,
        "nx=" + nxt,
        "b=",
    ]
    return feats


def extract_features(tokens: Sequence[str], i: int, hash_dim: int = DEFAULT_HASH_DIM) -> Tuple[int, ...]:
    """Sorted, de-duplicated feature ids for token i of a sentence.

    Only the window [i-1, i+1] is read; position 0 and N-1 emit distinct
    boundary markers for the missing neighbor.
    """
    if not 0 <= i < len(tokens):
        raise ValueError(f"token index {i} out of range for {len(tokens)} tokens")
    mask = hash_dim - 1
    if hash_dim & mask:
        raise ValueError("hash_dim must be a power of two")
    return tuple(sorted({_h64(f) & mask for f in _templates(tokens, i)}))


def sentence_features(tokens: Sequence[str], hash_dim: int = DEFAULT_HASH_DIM) -> List[Tuple[int, ...]]:
    """Feature ids for every position of a sentence."""
    return [extract_features(tokens, i, hash_dim) for i in range(len(tokens))]


@dataclass(frozen=True)
class EncoderModel:
    """Trainable weight table over the hashed feature space (D x L)."""

    weights: np.ndarray
    template_version: str = TEMPLATE_VERSION

    def __post_init__(self) -> None:
        if self.weights.ndim != 2:
            raise ValueError("weights must be a (D, L) matrix")
        d = self.weights.shape[0]
        if d & (d - 1):
            raise ValueError("hash dimension must be a power of two")

    @property
    def hash_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def num_labels(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def seeded(cls, hash_dim: int, num_labels: int, rng: np.random.Generator) -> "EncoderModel":
        """Fresh encoder with weights drawn uniformly from (-0.01, 0.01)."""
        return cls(rng.uniform(-0.01, 0.01, size=(hash_dim, num_labels)))

    def copy(self) -> "EncoderModel":
        return EncoderModel(self.weights.copy(), self.template_version)


def emissions_from_features(enc: EncoderModel, feats: Sequence[Tuple[int, ...]]) -> np.ndarray:
    """em[i, l] = sum of weight rows of token i's feature ids."""
    em = np.empty((len(feats), enc.num_labels))
    for i, ids in enumerate(feats):
        em[i] = enc.weights[list(ids)].sum(axis=0)
    return em


def emissions(enc: EncoderModel, tokens: Sequence[str]) -> np.ndarray:
    """Score a sentence into an (N, L) emission matrix."""
    return emissions_from_features(enc, sentence_features(tokens, enc.hash_dim))
