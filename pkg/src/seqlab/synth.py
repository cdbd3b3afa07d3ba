"""Synthetic labeled corpora plus degradable gazetteers.

Sentences are instantiated from token templates whose typed slots are filled
from per-type surface vocabularies.  Vocabularies are disjoint across types
and entity tokens always contain a digit (filler words never do), so gold
labels are unambiguous and annotating with the undegraded gazetteer recovers
them exactly.  Degradation has two independent knobs: coverage (drop entries)
and type bias (relabel kept entries), mimicking incomplete and biased
dictionaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .core import StrongExample, TagSet
from .gazetteer import Gazetteer

DEFAULT_FILLERS = (
    "find", "show", "me", "cheap", "new", "best", "buy", "order", "the", "a",
    "for", "with", "gift", "kids", "sale", "deal", "top", "rated", "under",
    "over", "in", "stock", "fast", "shipping", "please",
)

_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"

# Sub-streams of the corpus seed; spawning via seed sequences keeps every
# stage independently reproducible.
_STREAM_TEMPLATES = 1
_STREAM_CORPUS = 2
_STREAM_DEGRADE = 3


def _slot(type_name: str) -> str:
    return f"<{type_name}>"


def _is_slot(item: str) -> bool:
    return item.startswith("<") and item.endswith(">")


Template = Tuple[str, ...]


@dataclass(frozen=True)
class SynthSpec:
    """Everything needed to generate one benchmark corpus deterministically.

    ``strong_templates`` is the (sub)pool the strong training split draws
    from; dev, test and the weak pool always draw from the full pool.  A
    proper subset models the realistic regime where the large weak corpus
    covers sentence patterns the small labeled set never shows.
    """

    entity_types: Tuple[str, ...]
    unigrams_per_type: int
    bigrams_per_type: int
    templates: Tuple[Template, ...]
    strong_templates: Tuple[Template, ...]
    strong_train: int
    strong_dev: int
    strong_test: int
    weak_pool: int
    seed: int
    rho: float
    beta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0 or not 0.0 <= self.beta <= 1.0:
            raise ValueError("rho and beta must lie in [0, 1]")
        for name in ("strong_train", "strong_dev", "strong_test", "weak_pool"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.unigrams_per_type < 1 or self.bigrams_per_type < 0:
            raise ValueError("need at least one unigram surface per type")
        if self.bigrams_per_type > self.unigrams_per_type:
            raise ValueError("bigrams_per_type cannot exceed unigrams_per_type")
        if not set(self.strong_templates) <= set(self.templates):
            raise ValueError("strong_templates must be a subset of the template pool")

    @property
    def tags(self) -> TagSet:
        return TagSet(self.entity_types)


@dataclass(frozen=True)
class SynthCorpus:
    train: Tuple[StrongExample, ...]
    dev: Tuple[StrongExample, ...]
    test: Tuple[StrongExample, ...]
    weak_gold: Tuple[StrongExample, ...]  # pool sentences with held-back gold
    gazetteer: Gazetteer
    tags: TagSet


def build_templates(
    entity_types: Sequence[str],
    fillers: Sequence[str],
    one_slot_patterns: int,
    two_slot_patterns: int,
    seed: int,
    strong_fraction: float = 1.0,
) -> Tuple[Tuple[Template, ...], Tuple[Template, ...]]:
    """(full pool, strong-split pool) of typed templates.

    Base token patterns are expanded with every type assignment per slot, so
    every type appears in the same contexts and sentence context carries no
    type information; only the slot surface does.  Slots are never adjacent,
    which keeps dictionary matches from crossing span boundaries.  The strong
    pool takes the leading ``strong_fraction`` of base patterns of each slot
    arity.
    """
    if not 0.0 < strong_fraction <= 1.0:
        raise ValueError("strong_fraction must lie in (0, 1]")
    rng = np.random.default_rng([seed, _STREAM_TEMPLATES])
    fillers = list(fillers)
    bases: List[Tuple[Tuple[str, ...], int]] = []  # (pattern with "*" slots, n_slots)
    for _ in range(one_slot_patterns):
        length = int(rng.integers(3, 7))
        pos = int(rng.integers(0, length))
        toks = [fillers[int(rng.integers(len(fillers)))] for _ in range(length)]
        toks[pos] = "*"
        bases.append((tuple(toks), 1))
    for _ in range(two_slot_patterns):
        length = int(rng.integers(5, 9))
        first = int(rng.integers(0, length - 2))
        second = int(rng.integers(first + 2, length))  # gap >= 1 token
        toks = [fillers[int(rng.integers(len(fillers)))] for _ in range(length)]
        toks[first] = toks[second] = "*"
        bases.append((tuple(toks), 2))

    def expand(pattern: Tuple[str, ...], n_slots: int) -> List[Template]:
        if n_slots == 1:
            assignments = [(t,) for t in entity_types]
        else:
            assignments = [(a, b) for a in entity_types for b in entity_types]
        out = []
        for assign in assignments:
            it = iter(assign)
            out.append(tuple(_slot(next(it)) if tok == "*" else tok for tok in pattern))
        return out

    full: List[Template] = []
    strong: List[Template] = []
    n_strong = {1: max(1, round(strong_fraction * one_slot_patterns)),
                2: max(1, round(strong_fraction * two_slot_patterns)) if two_slot_patterns else 0}
    seen = {1: 0, 2: 0}
    for pattern, n_slots in bases:
        expanded = expand(pattern, n_slots)
        full.extend(expanded)
        if seen[n_slots] < n_strong[n_slots]:
            strong.extend(expanded)
        seen[n_slots] += 1
    return tuple(full), tuple(strong)


def reference_spec(seed: int = 0) -> SynthSpec:
    """The shipped desk-scale benchmark: 5 types, 500/1000/1000/20000 sentences,
    coverage 0.5 and type bias 0.05 on the gazetteer.  The strong split sees
    only 40% of the sentence patterns."""
    entity_types = ("color", "brand", "material", "productType", "misc")
    templates, strong_templates = build_templates(
        entity_types, DEFAULT_FILLERS, 20, 5, seed, strong_fraction=0.4
    )
    return SynthSpec(
        entity_types=entity_types,
        unigrams_per_type=120,
        bigrams_per_type=40,
        templates=templates,
        strong_templates=strong_templates,
        strong_train=500,
        strong_dev=1000,
        strong_test=1000,
        weak_pool=20000,
        seed=seed,
        rho=0.5,
        beta=0.05,
    )


def spec_from_config(cfg: Mapping[str, str]) -> SynthSpec:
    """Build a SynthSpec from a flat key=value mapping."""
    def geti(key: str, default: int) -> int:
        return int(cfg.get(key, default))

    entity_types = tuple(t for t in cfg.get("entity_types", "").split(",") if t)
    if not entity_types:
        raise ValueError("config must declare entity_types=a,b,c")
    seed = geti("seed", 0)
    templates, strong_templates = build_templates(
        entity_types,
        DEFAULT_FILLERS,
        geti("one_slot_patterns", 20),
        geti("two_slot_patterns", 5),
        seed,
        strong_fraction=float(cfg.get("strong_template_fraction", 1.0)),
    )
    return SynthSpec(
        entity_types=entity_types,
        unigrams_per_type=geti("unigrams_per_type", 120),
        bigrams_per_type=geti("bigrams_per_type", 40),
        templates=templates,
        strong_templates=strong_templates,
        strong_train=geti("strong_train", 500),
        strong_dev=geti("strong_dev", 1000),
        strong_test=geti("strong_test", 1000),
        weak_pool=geti("weak_pool", 20000),
        seed=seed,
        rho=float(cfg.get("rho", 0.5)),
        beta=float(cfg.get("beta", 0.05)),
    )


def _fresh_token(rng: np.random.Generator, used: set) -> str:
    while True:
        length = int(rng.integers(4, 7))
        chars = [_ALPHABET[int(rng.integers(len(_ALPHABET)))] for _ in range(length)]
        tok = "".join(chars)
        if any(c.isdigit() for c in tok) and tok not in used:
            used.add(tok)
            return tok


def _build_vocab(spec: SynthSpec, rng: np.random.Generator) -> Dict[str, List[Tuple[str, ...]]]:
    """Per-type surface lists: unigrams first, then bigrams headed by the
    matching unigram (so dropping a bigram can leave a shorter match behind)."""
    used: set = set(DEFAULT_FILLERS)
    surfaces: Dict[str, List[Tuple[str, ...]]] = {}
    for type_name in spec.entity_types:
        unigrams = [_fresh_token(rng, used) for _ in range(spec.unigrams_per_type)]
        entries: List[Tuple[str, ...]] = [(u,) for u in unigrams]
        for k in range(spec.bigrams_per_type):
            entries.append((unigrams[k], _fresh_token(rng, used)))
        surfaces[type_name] = entries
    return surfaces


def _make_sentence(
    pool: Tuple[Template, ...],
    surfaces: Dict[str, List[Tuple[str, ...]]],
    tags: TagSet,
    rng: np.random.Generator,
) -> StrongExample:
    template = pool[int(rng.integers(len(pool)))]
    tokens: List[str] = []
    labels: List[int] = []
    for item in template:
        if _is_slot(item):
            type_name = item[1:-1]
            options = surfaces[type_name]
            surf = options[int(rng.integers(len(options)))]
            tokens.extend(surf)
            labels.append(tags.b_label(type_name))
            labels.extend(tags.i_label(type_name) for _ in surf[1:])
        else:
            tokens.append(item)
            labels.append(0)
    return StrongExample(tuple(tokens), tuple(labels), tags)


def generate(spec: SynthSpec) -> SynthCorpus:
    """Materialize all splits, the hidden-gold weak pool and the full gazetteer."""
    sizes = (spec.strong_train, spec.strong_dev, spec.strong_test, spec.weak_pool)
    if not spec.templates and any(sizes):
        raise ValueError("template pool is empty but corpus sizes are positive")
    tags = spec.tags
    rng = np.random.default_rng([spec.seed, _STREAM_CORPUS])
    surfaces = _build_vocab(spec, rng)
    entries = [(surf, t) for t in spec.entity_types for surf in surfaces[t]]
    gaz = Gazetteer.from_pairs(entries)
    pools = (spec.strong_templates, spec.templates, spec.templates, spec.templates)
    splits: List[Tuple[StrongExample, ...]] = []
    for size, pool in zip(sizes, pools):
        splits.append(tuple(_make_sentence(pool, surfaces, tags, rng) for _ in range(size)))
    train, dev, test, weak_gold = splits
    return SynthCorpus(train, dev, test, weak_gold, gaz, tags)


def degrade(gaz: Gazetteer, rho: float, beta: float, seed: int) -> Gazetteer:
    """Keep each entry with probability rho; retype kept entries with
    probability beta to a uniformly random different type."""
    if not 0.0 <= rho <= 1.0 or not 0.0 <= beta <= 1.0:
        raise ValueError("rho and beta must lie in [0, 1]")
    all_types = sorted({t for _, t in gaz.entries})
    rng = np.random.default_rng([seed, _STREAM_DEGRADE])
    kept: List[Tuple[Tuple[str, ...], str]] = []
    for surface, type_name in gaz.entries:
        keep = rng.random() < rho
        flip = rng.random() < beta
        u = rng.random()
        if not keep:
            continue
        new_type = type_name
        if flip and len(all_types) > 1:
            others = [t for t in all_types if t != type_name]
            new_type = others[int(u * len(others))]
        kept.append((surface, new_type))
    return Gazetteer.from_pairs(kept, gaz.case_insensitive)
