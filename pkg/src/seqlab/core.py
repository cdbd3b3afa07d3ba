"""Core domain types for BIO sequence labeling.

Label ids are laid out as O=0 followed by (B-e1, I-e1, B-e2, I-e2, ...) in
entity-type declaration order, so serialized models stay portable and diffs
stable.  All containers are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

O_ID = 0

Sentence = Tuple[str, ...]
LabelSeq = Tuple[int, ...]


def make_sentence(tokens: Iterable[str]) -> Sentence:
    """Validate and freeze a token sequence (N >= 1, no whitespace in tokens)."""
    toks = tuple(tokens)
    if len(toks) == 0:
        raise ValueError("sentence must contain at least one token")
    for t in toks:
        if not isinstance(t, str) or not t:
            raise ValueError(f"token must be a non-empty string, got {t!r}")
        if any(c.isspace() for c in t):
            raise ValueError(f"token contains whitespace: {t!r}")
    return toks


@dataclass(frozen=True)
class TagSet:
    """Ordered entity-type declaration defining the label space.

    The label space has L = 2 * len(entity_types) + 1 labels: O is always 0,
    B-e_k is 1 + 2k and I-e_k is 2 + 2k for the k-th declared type.
    """

    entity_types: Tuple[str, ...]

    def __post_init__(self) -> None:
        types = tuple(self.entity_types)
        object.__setattr__(self, "entity_types", types)
        if len(set(types)) != len(types):
            raise ValueError("entity types must be unique")
        for t in types:
            if not t or any(c.isspace() for c in t):
                raise ValueError(f"invalid entity type name: {t!r}")

    @property
    def num_labels(self) -> int:
        return 2 * len(self.entity_types) + 1

    def b_label(self, type_name: str) -> int:
        return 1 + 2 * self._type_index(type_name)

    def i_label(self, type_name: str) -> int:
        return 2 + 2 * self._type_index(type_name)

    def label_of(self, kind: str, type_name: Optional[str] = None) -> int:
        """Map (kind, type) to a label id; kind is one of 'O', 'B', 'I'."""
        if kind == "O":
            return O_ID
        if type_name is None:
            raise ValueError(f"kind {kind!r} requires an entity type")
        if kind == "B":
            return self.b_label(type_name)
        if kind == "I":
            return self.i_label(type_name)
        raise ValueError(f"unknown label kind: {kind!r}")

    def name_of(self, label_id: int) -> str:
        """Render a label id as 'O', 'B-type' or 'I-type'."""
        if label_id == O_ID:
            return "O"
        if not 0 < label_id < self.num_labels:
            raise ValueError(f"label id out of range: {label_id}")
        k, rem = divmod(label_id - 1, 2)
        prefix = "B" if rem == 0 else "I"
        return f"{prefix}-{self.entity_types[k]}"

    def parse_label(self, name: str) -> int:
        """Inverse of name_of for label strings like 'O', 'B-color', 'I-color'."""
        if name == "O":
            return O_ID
        if len(name) > 2 and name[1] == "-" and name[0] in ("B", "I"):
            return self.label_of(name[0], name[2:])
        raise ValueError(f"malformed label string: {name!r}")

    def type_of(self, label_id: int) -> Optional[str]:
        """Entity type of a B/I label id, or None for O."""
        if label_id == O_ID:
            return None
        return self.entity_types[(label_id - 1) // 2]

    def is_begin(self, label_id: int) -> bool:
        return label_id != O_ID and (label_id - 1) % 2 == 0

    def is_inside(self, label_id: int) -> bool:
        return label_id != O_ID and (label_id - 1) % 2 == 1

    def _type_index(self, type_name: str) -> int:
        try:
            return self.entity_types.index(type_name)
        except ValueError:
            raise ValueError(f"undeclared entity type: {type_name!r}") from None


def check_labels(labels: Sequence[int], tags: TagSet, length: Optional[int] = None) -> LabelSeq:
    """Validate label ids against a tag set (and optionally a sentence length)."""
    seq = tuple(int(x) for x in labels)
    if length is not None and len(seq) != length:
        raise ValueError(f"label sequence length {len(seq)} != sentence length {length}")
    for x in seq:
        if not 0 <= x < tags.num_labels:
            raise ValueError(f"label id out of range: {x} (L={tags.num_labels})")
    return seq


def is_bio_valid(labels: Sequence[int], tags: TagSet) -> bool:
    """True iff every I-e label follows a B-e or I-e of the same type e."""
    prev = O_ID
    for lab in labels:
        if tags.is_inside(lab):
            if prev == O_ID or tags.type_of(prev) != tags.type_of(lab):
                return False
        prev = lab
    return True


def bio_transition_mask(tags: TagSet) -> np.ndarray:
    """Boolean (L, L) matrix; entry [i, j] is True iff j may follow i."""
    L = tags.num_labels
    allowed = np.ones((L, L), dtype=bool)
    for j in range(L):
        if not tags.is_inside(j):
            continue
        tj = tags.type_of(j)
        for i in range(L):
            if i == O_ID or tags.type_of(i) != tj:
                allowed[i, j] = False
    return allowed


def bio_start_mask(tags: TagSet) -> np.ndarray:
    """Boolean (L,) vector; True for labels allowed at sentence start (no I-e)."""
    L = tags.num_labels
    return np.array([not tags.is_inside(j) for j in range(L)], dtype=bool)


@dataclass(frozen=True)
class StrongExample:
    """A sentence with gold (human-quality) labels; gold must be BIO-valid."""

    sentence: Sentence
    gold: LabelSeq
    tags: TagSet = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentence", make_sentence(self.sentence))
        object.__setattr__(self, "gold", check_labels(self.gold, self.tags, len(self.sentence)))
        if not is_bio_valid(self.gold, self.tags):
            raise ValueError("gold labels must be BIO-valid")


@dataclass(frozen=True)
class WeakExample:
    """A sentence with gazetteer weak labels and optional completion artifacts.

    `weak` holds the raw dictionary-match labels; `predicted` and `corrected`
    are filled by the completion step, and `confidence` by calibration.
    Corrected sequences are allowed to be BIO-invalid.
    """

    sentence: Sentence
    weak: LabelSeq
    tags: TagSet = field(repr=False)
    predicted: Optional[LabelSeq] = None
    corrected: Optional[LabelSeq] = None
    confidence: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentence", make_sentence(self.sentence))
        n = len(self.sentence)
        object.__setattr__(self, "weak", check_labels(self.weak, self.tags, n))
        for name in ("predicted", "corrected"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, check_labels(val, self.tags, n))
        if self.confidence is not None:
            c = float(self.confidence)
            if not 0.0 <= c <= 0.95:
                raise ValueError(f"confidence must lie in [0, 0.95], got {c}")
            object.__setattr__(self, "confidence", c)

    def with_completion(self, predicted: Sequence[int], corrected: Sequence[int]) -> "WeakExample":
        return replace(self, predicted=tuple(predicted), corrected=tuple(corrected))

    def with_confidence(self, confidence: float) -> "WeakExample":
        return replace(self, confidence=confidence)
