"""The full tagging model: hashed linear encoder plus CRF transition table."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from . import crf, features
from .core import LabelSeq, Sentence, TagSet, bio_start_mask, bio_transition_mask

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CrfModel:
    """Trainable parameters for one tag set.

    The weight arrays are mutated in place by trainers (single writer);
    everything else is fixed at construction.
    """

    tags: TagSet
    encoder: features.EncoderModel
    transitions: crf.TransitionTable

    def __post_init__(self) -> None:
        if self.encoder.num_labels != self.tags.num_labels:
            raise ValueError("encoder width does not match tag set")
        if self.transitions.num_labels != self.tags.num_labels:
            raise ValueError("transition table does not match tag set")

    def copy(self) -> "CrfModel":
        return CrfModel(self.tags, self.encoder.copy(), self.transitions.copy())


def new_model(tags: TagSet, hash_dim: int, rng: np.random.Generator) -> CrfModel:
    """Seeded fresh model: uniform(-0.01, 0.01) weights, BIO masks from the tag set.

    Draw order (encoder weights, then trans, start, stop) is part of the
    determinism contract.
    """
    L = tags.num_labels
    enc = features.EncoderModel.seeded(hash_dim, L, rng)
    table = crf.TransitionTable(
        trans=rng.uniform(-0.01, 0.01, size=(L, L)),
        start=rng.uniform(-0.01, 0.01, size=L),
        stop=rng.uniform(-0.01, 0.01, size=L),
        allowed_trans=bio_transition_mask(tags),
        allowed_start=bio_start_mask(tags),
    )
    return CrfModel(tags, enc, table)


def emissions(model: CrfModel, tokens: Sentence) -> np.ndarray:
    return features.emissions(model.encoder, tokens)


def decode(model: CrfModel, tokens: Sentence, constrained: bool = True) -> Tuple[LabelSeq, float]:
    """Viterbi decode one sentence; constrained decoding is always BIO-valid."""
    return crf.viterbi(emissions(model, tokens), model.transitions, constrained=constrained)


def decode_many(model: CrfModel, sentences: Sequence[Sentence], constrained: bool = True) -> List[LabelSeq]:
    return [decode(model, s, constrained=constrained)[0] for s in sentences]
