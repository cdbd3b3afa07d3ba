"""Gazetteer weak labeling by exact multi-pattern matching over token sequences.

Matching is token-level (never substring) with leftmost-longest,
non-overlapping span selection, so the produced label sequences are always
BIO-valid and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from .core import LabelSeq, O_ID, Sentence, TagSet
from .metrics import span_prf

Entry = Tuple[Tuple[str, ...], str]

_END = object()  # trie terminal key holding the entity type


@dataclass(frozen=True)
class Gazetteer:
    """Surface-form -> entity-type dictionary.

    Duplicate (surface, type) pairs are collapsed; one surface mapping to two
    different types is rejected (exact matching must stay deterministic).
    """

    entries: Tuple[Entry, ...]
    case_insensitive: bool = True

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Sequence[str], str]], case_insensitive: bool = True) -> "Gazetteer":
        seen: Dict[Tuple[str, ...], str] = {}
        ordered: List[Entry] = []
        for surface, type_name in pairs:
            toks = tuple(surface)
            if not toks or any(not t for t in toks):
                raise ValueError(f"empty surface form in gazetteer entry for type {type_name!r}")
            key = tuple(t.lower() for t in toks) if case_insensitive else toks
            if key in seen:
                if seen[key] != type_name:
                    raise ValueError(
                        f"surface {' '.join(toks)!r} maps to both {seen[key]!r} and {type_name!r}"
                    )
                continue
            seen[key] = type_name
            ordered.append((toks, type_name))
        return cls(tuple(ordered), case_insensitive)

    def __len__(self) -> int:
        return len(self.entries)


def load_gazetteer(path: str | Path, case_insensitive: bool = True) -> Gazetteer:
    """Read a TSV gazetteer: one `surface form<TAB>type` per line, `#` comments.

    Surfaces are tokenized on single spaces.
    """
    pairs: List[Tuple[Tuple[str, ...], str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected 'surface<TAB>type', got {line!r}")
            pairs.append((tuple(parts[0].split(" ")), parts[1]))
    return Gazetteer.from_pairs(pairs, case_insensitive)


def write_gazetteer(gaz: Gazetteer, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for surface, type_name in gaz.entries:
            fh.write(" ".join(surface) + "\t" + type_name + "\n")


@dataclass(frozen=True)
class Matcher:
    """Compiled token trie recognizing exactly the gazetteer surfaces."""

    tags: TagSet
    case_insensitive: bool
    _trie: dict = field(repr=False)
    _max_len: int

    def _fold(self, token: str) -> str:
        return token.lower() if self.case_insensitive else token

    def longest_match(self, tokens: Sequence[str], i: int) -> Tuple[int, str] | None:
        """(length, type) of the longest surface starting at position i, if any."""
        node = self._trie
        best: Tuple[int, str] | None = None
        for j in range(i, min(len(tokens), i + self._max_len)):
            node = node.get(self._fold(tokens[j]))
            if node is None:
                break
            if _END in node:
                best = (j - i + 1, node[_END])
        return best


def compile_matcher(gaz: Gazetteer, tags: TagSet) -> Matcher:
    """Build the matching automaton, validating entry types against the tag set."""
    trie: dict = {}
    max_len = 1
    declared = set(tags.entity_types)
    for surface, type_name in gaz.entries:
        if type_name not in declared:
            raise ValueError(f"gazetteer type {type_name!r} not declared in tag set")
        node = trie
        for tok in surface:
            key = tok.lower() if gaz.case_insensitive else tok
            node = node.setdefault(key, {})
        node[_END] = type_name
        max_len = max(max_len, len(surface))
    return Matcher(tags, gaz.case_insensitive, trie, max_len)


def annotate(matcher: Matcher, tokens: Sentence) -> LabelSeq:
    """Weak BIO labels via leftmost-longest non-overlapping match selection."""
    n = len(tokens)
    labels = [O_ID] * n
    i = 0
    while i < n:
        hit = matcher.longest_match(tokens, i)
        if hit is None:
            i += 1
            continue
        length, type_name = hit
        labels[i] = matcher.tags.b_label(type_name)
        for j in range(i + 1, i + length):
            labels[j] = matcher.tags.i_label(type_name)
        i += length
    return tuple(labels)


def annotate_many(matcher: Matcher, sentences: Sequence[Sentence]) -> List[LabelSeq]:
    return [annotate(matcher, s) for s in sentences]


def weak_label_quality(
    weak: Sequence[LabelSeq], gold: Sequence[LabelSeq], tags: TagSet
) -> Tuple[float, float]:
    """Span-level (precision, recall) of weak labels against gold.

    Zero predicted spans report precision 0 rather than NaN.
    """
    m = span_prf(weak, gold, tags)
    return m.span_p, m.span_r
