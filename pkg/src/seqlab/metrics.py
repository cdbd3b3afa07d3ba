"""Span extraction and evaluation metrics.

Span scoring is exact-match (boundaries and type) micro-averaged over all
sentences.  Span extraction is lenient for BIO-invalid input: an I-e with no
compatible predecessor opens a new span, so completed weak labels remain
scorable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Set, Tuple

from .core import LabelSeq, O_ID, TagSet


@dataclass(frozen=True)
class Span:
    start: int
    end: int  # inclusive
    type: str

    def __post_init__(self) -> None:
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid span bounds ({self.start}, {self.end})")


@dataclass(frozen=True)
class Metrics:
    span_p: float
    span_r: float
    span_f1: float
    token_acc: float
    sentence_acc: float
    per_type: Dict[str, Dict[str, float]]
    flags: Dict[str, bool]

    def to_json_dict(self) -> dict:
        return {
            "span_p": self.span_p,
            "span_r": self.span_r,
            "span_f1": self.span_f1,
            "token_acc": self.token_acc,
            "sentence_acc": self.sentence_acc,
            "per_type": self.per_type,
            "flags": self.flags,
        }


def extract_spans(labels: LabelSeq, tags: TagSet) -> Set[Span]:
    """Decode BIO labels into typed spans (lenient on invalid transitions)."""
    spans: Set[Span] = set()
    start = -1
    cur_type: str | None = None
    for i, lab in enumerate(labels):
        if lab == O_ID:
            if cur_type is not None:
                spans.add(Span(start, i - 1, cur_type))
                cur_type = None
            continue
        t = tags.type_of(lab)
        if tags.is_begin(lab) or t != cur_type:
            if cur_type is not None:
                spans.add(Span(start, i - 1, cur_type))
            start, cur_type = i, t
    if cur_type is not None:
        spans.add(Span(start, len(labels) - 1, cur_type))
    return spans


def render_spans(spans: Sequence[Span], length: int, tags: TagSet) -> LabelSeq:
    """BIO labels from a set of non-overlapping spans (inverse of extract_spans)."""
    labels = [O_ID] * length
    for sp in spans:
        if sp.end >= length:
            raise ValueError(f"span {sp} exceeds sentence length {length}")
        if any(labels[i] != O_ID for i in range(sp.start, sp.end + 1)):
            raise ValueError(f"span {sp} overlaps another span")
        labels[sp.start] = tags.b_label(sp.type)
        for i in range(sp.start + 1, sp.end + 1):
            labels[i] = tags.i_label(sp.type)
    return tuple(labels)


def _check_aligned(pred: Sequence[LabelSeq], gold: Sequence[LabelSeq]) -> None:
    if len(pred) != len(gold):
        raise ValueError(f"datasets not aligned: {len(pred)} vs {len(gold)} sentences")
    for k, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise ValueError(f"sentence {k}: label lengths differ ({len(p)} vs {len(g)})")


def _prf(tp: int, n_pred: int, n_gold: int) -> Tuple[float, float, float]:
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def span_prf(pred: Sequence[LabelSeq], gold: Sequence[LabelSeq], tags: TagSet) -> Metrics:
    """Micro span precision/recall/F1 plus token and sentence accuracy."""
    _check_aligned(pred, gold)
    tp = n_pred = n_gold = 0
    by_type: Dict[str, List[int]] = {t: [0, 0, 0] for t in tags.entity_types}
    tok_ok = tok_all = sent_ok = 0
    for p_seq, g_seq in zip(pred, gold):
        p_spans = extract_spans(p_seq, tags)
        g_spans = extract_spans(g_seq, tags)
        tp += len(p_spans & g_spans)
        n_pred += len(p_spans)
        n_gold += len(g_spans)
        for sp in p_spans & g_spans:
            by_type[sp.type][0] += 1
        for sp in p_spans:
            by_type[sp.type][1] += 1
        for sp in g_spans:
            by_type[sp.type][2] += 1
        tok_ok += sum(a == b for a, b in zip(p_seq, g_seq))
        tok_all += len(g_seq)
        sent_ok += int(p_seq == g_seq)
    p, r, f1 = _prf(tp, n_pred, n_gold)
    per_type = {}
    for t, (t_tp, t_pred, t_gold) in by_type.items():
        tp_, tr_, tf_ = _prf(t_tp, t_pred, t_gold)
        per_type[t] = {"p": tp_, "r": tr_, "f1": tf_, "pred": float(t_pred), "gold": float(t_gold)}
    n_sent = len(gold)
    return Metrics(
        span_p=p,
        span_r=r,
        span_f1=f1,
        token_acc=tok_ok / tok_all if tok_all else 0.0,
        sentence_acc=sent_ok / n_sent if n_sent else 0.0,
        per_type=per_type,
        flags={"zero_prediction": n_pred == 0, "zero_gold": n_gold == 0},
    )


def token_accuracy(pred: Sequence[LabelSeq], gold: Sequence[LabelSeq]) -> float:
    """Fraction of tokens whose labels agree."""
    _check_aligned(pred, gold)
    ok = total = 0
    for p_seq, g_seq in zip(pred, gold):
        ok += sum(a == b for a, b in zip(p_seq, g_seq))
        total += len(g_seq)
    return ok / total if total else 0.0


def sentence_accuracy(pred: Sequence[LabelSeq], gold: Sequence[LabelSeq]) -> float:
    """Fraction of sentences whose whole label sequence matches exactly."""
    _check_aligned(pred, gold)
    if not gold:
        return 0.0
    return sum(tuple(p) == tuple(g) for p, g in zip(pred, gold)) / len(gold)


def label_distribution(
    sources: Sequence[Tuple[str, Sequence[LabelSeq]]], tags: TagSet
) -> Dict[str, Dict[str, int]]:
    """Per-type span counts and O-token count for each named label source.

    Useful for comparing gold, weak, corrected and pseudo label distributions
    side by side.
    """
    table: Dict[str, Dict[str, int]] = {}
    for name, seqs in sources:
        row = {t: 0 for t in tags.entity_types}
        o_tokens = 0
        for seq in seqs:
            for sp in extract_spans(seq, tags):
                row[sp.type] += 1
            o_tokens += sum(1 for x in seq if x == O_ID)
        row["O_tokens"] = o_tokens
        table[name] = row
    return table
