"""Sentence-level confidence estimation by histogram binning.

The binning variable is the per-token normalized log-posterior of the decoded
path, (s(y_hat) - log Z) / N, which makes bins comparable across sentence
lengths.  Bin confidences are sequence-level exact-match rates measured on a
validation set.  Combined confidences for completed weak labels interpolate
between the (trusted) dictionary-matched fraction and the binned model
confidence, then apply the fixed 0.95 cap.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from . import crf
from .core import Sentence, StrongExample
from .model import CrfModel, emissions

SMOOTHING_CAP = 0.95
SCORE_DEFINITION = "mean-token-log-posterior-of-viterbi-path"


def prediction_score(m: CrfModel, tokens: Sentence) -> float:
    """(sequence_score(decode) - log_partition) / N; always <= 0."""
    em = emissions(m, tokens)
    _, path_score = crf.viterbi(em, m.transitions)
    return (path_score - crf.log_partition(em, m.transitions)) / len(tokens)


@dataclass(frozen=True)
class CalibrationTable:
    """Histogram bins over prediction scores with open-ended outer bins.

    ``edges`` has B+1 entries whose first and last are -inf/+inf sentinels;
    a score equal to an interior edge falls into the right bin ([lo, hi)).
    """

    edges: Tuple[float, ...]
    confidences: Tuple[float, ...]
    counts: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.edges) != len(self.confidences) + 1 or len(self.confidences) != len(self.counts):
            raise ValueError("edges must have exactly one more entry than confidences/counts")
        if not self.confidences:
            raise ValueError("table needs at least one bin")
        if self.edges[0] != float("-inf") or self.edges[-1] != float("inf"):
            raise ValueError("outer edges must be -inf/+inf sentinels")
        interior = self.edges[1:-1]
        if any(a >= b for a, b in zip(interior, interior[1:])):
            raise ValueError("edges must be strictly increasing")
        if any(not 0.0 <= c <= 1.0 for c in self.confidences):
            raise ValueError("bin confidences must lie in [0, 1]")
        if any(c < 0 for c in self.counts):
            raise ValueError("bin counts must be non-negative")

    @property
    def num_bins(self) -> int:
        return len(self.confidences)

    def bin_index(self, score: float) -> int:
        return bisect.bisect_right(self.edges, score, 1, len(self.edges) - 1) - 1

    def to_json_dict(self) -> dict:
        return {
            "edges": list(self.edges),
            "confidences": list(self.confidences),
            "counts": list(self.counts),
            "score_definition": SCORE_DEFINITION,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CalibrationTable":
        if doc.get("score_definition") != SCORE_DEFINITION:
            raise ValueError(f"unsupported score definition: {doc.get('score_definition')!r}")
        return cls(tuple(doc["edges"]), tuple(doc["confidences"]), tuple(doc["counts"]))


def save_table(table: CalibrationTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_table(path) -> CalibrationTable:
    with open(path, encoding="utf-8") as fh:
        return CalibrationTable.from_json_dict(json.load(fh))


def fit(m: CrfModel, validation: Sequence[StrongExample], num_bins: int) -> CalibrationTable:
    """Equal-frequency binning of validation scores against exact-match decodes.

    With ties between scores the [lo, hi) edge convention may shift items to
    the right bin; counts record the actual assignment.
    """
    if not validation:
        raise ValueError("validation set must be non-empty")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    scores: List[float] = []
    hits: List[bool] = []
    for ex in validation:
        em = emissions(m, ex.sentence)
        path, path_score = crf.viterbi(em, m.transitions)
        scores.append((path_score - crf.log_partition(em, m.transitions)) / len(ex.sentence))
        hits.append(path == ex.gold)
    order = np.argsort(np.asarray(scores), kind="stable")
    n = len(scores)
    bins = min(num_bins, n)
    interior: List[float] = []
    for b in range(1, bins):
        e = float(scores[order[(n * b) // bins]])
        if not interior or e > interior[-1]:  # tied chunk boundaries merge bins
            interior.append(e)
    table_edges = (float("-inf"), *interior, float("inf"))
    bins = len(interior) + 1
    assigned = [[] for _ in range(bins)]
    probe = CalibrationTable(table_edges, (0.0,) * bins, (0,) * bins)
    for s, h in zip(scores, hits):
        assigned[probe.bin_index(s)].append(h)
    confidences = tuple(sum(a) / len(a) if a else 0.0 for a in assigned)
    counts = tuple(len(a) for a in assigned)
    return CalibrationTable(table_edges, confidences, counts)


def predict_confidence(table: CalibrationTable, score: float) -> float:
    """Confidence of the bin containing the score; outer bins absorb outliers."""
    return table.confidences[table.bin_index(score)]


def combined_confidence(matched: float, p_pred: float) -> float:
    """min(0.95, matched * 1 + (1 - matched) * p_pred).

    The matched fraction weights the (assumed-correct) dictionary labels; the
    remainder is covered by the binned model confidence.  The 0.95 cap keeps
    estimates conservative.
    """
    if not 0.0 <= matched <= 1.0:
        raise ValueError(f"matched fraction must lie in [0, 1], got {matched}")
    if not 0.0 <= p_pred <= 1.0:
        raise ValueError(f"predicted confidence must lie in [0, 1], got {p_pred}")
    return min(SMOOTHING_CAP, matched + (1.0 - matched) * p_pred)
