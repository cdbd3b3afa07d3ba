"""Weak label completion and its diagnostics.

Completion fills O positions of a weak label sequence with model predictions,
token by token, never touching a non-O weak label.  The result can be
BIO-invalid (e.g. a kept B-x followed by a predicted I-y), which is reported
rather than repaired.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .core import LabelSeq, O_ID, TagSet, WeakExample
from .model import CrfModel, decode


def complete(weak: Sequence[int], predicted: Sequence[int]) -> LabelSeq:
    """Per token: keep the weak label unless it is O, else take the prediction."""
    if len(weak) != len(predicted):
        raise ValueError(f"length mismatch: weak={len(weak)} predicted={len(predicted)}")
    return tuple(p if w == O_ID else w for w, p in zip(weak, predicted))


def matched_fraction(weak: Sequence[int]) -> float:
    """Fraction of tokens carrying a non-O weak label."""
    if not len(weak):
        return 0.0
    return sum(1 for w in weak if w != O_ID) / len(weak)


def find_bio_mismatches(labels: Sequence[int], tags: TagSet) -> List[int]:
    """Positions whose I-e label lacks a B-e/I-e predecessor of the same type."""
    out: List[int] = []
    prev = O_ID
    for i, lab in enumerate(labels):
        if tags.is_inside(lab):
            if prev == O_ID or tags.type_of(prev) != tags.type_of(lab):
                out.append(i)
        prev = lab
    return out


@dataclass(frozen=True)
class CompletionStats:
    sentences: int
    mismatched_sentences: int
    dropped_sentences: int

    @property
    def mismatch_fraction(self) -> float:
        return self.mismatched_sentences / self.sentences if self.sentences else 0.0

    def to_json_dict(self) -> dict:
        return {
            "sentences": self.sentences,
            "mismatched_sentences": self.mismatched_sentences,
            "mismatch_fraction": self.mismatch_fraction,
            "dropped_sentences": self.dropped_sentences,
        }


def complete_dataset(
    weak_data: Sequence[WeakExample],
    model: CrfModel,
    drop_mismatches: bool = False,
) -> Tuple[List[WeakExample], CompletionStats]:
    """Fill predicted and corrected labels for a whole weak dataset.

    Predictions come from constrained Viterbi decoding, so mismatches can only
    arise where kept weak labels meet predicted continuations.  With
    ``drop_mismatches`` the affected sentences are removed (output order
    otherwise follows input order).
    """
    out: List[WeakExample] = []
    mismatched = dropped = 0
    for ex in weak_data:
        predicted, _ = decode(model, ex.sentence)
        corrected = complete(ex.weak, predicted)
        bad = bool(find_bio_mismatches(corrected, ex.tags))
        mismatched += int(bad)
        if bad and drop_mismatches:
            dropped += 1
            continue
        out.append(ex.with_completion(predicted, corrected))
    return out, CompletionStats(len(weak_data), mismatched, dropped)
