"""scikit-learn style estimators wrapping the CRF tagger and the staged
weak-supervision recipe.

X is a list of token sequences and y a list of BIO label-string sequences
("O", "B-color", ...), mirroring the common sequence-tagger estimator
convention.  Both estimators are clonable and grid-searchable through
get_params / set_params.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import calibration
from .core import StrongExample, TagSet, WeakExample, make_sentence
from .metrics import span_prf
from .model import decode_many
from .training import TrainConfig, run_pipeline, train_supervised


def check_sentences(X) -> List[Tuple[str, ...]]:
    """Validate and freeze a batch of token sequences."""
    if isinstance(X, str):
        raise ValueError("X must be a sequence of token sequences, not a string")
    return [make_sentence(x) for x in X]


def check_aligned_labels(X: Sequence[Sequence[str]], y) -> List[List[str]]:
    """Validate that y is a batch of label-string sequences aligned with X."""
    if y is None:
        raise ValueError("y (label sequences) is required")
    y = list(y)
    if len(y) != len(X):
        raise ValueError(f"X and y lengths differ: {len(X)} vs {len(y)}")
    out = []
    for k, (toks, labels) in enumerate(zip(X, y)):
        labels = list(labels)
        if len(labels) != len(toks):
            raise ValueError(f"sentence {k}: {len(toks)} tokens but {len(labels)} labels")
        out.append([str(l) for l in labels])
    return out


def infer_tagset(*label_batches: Sequence[Sequence[str]]) -> TagSet:
    """Entity types in order of first appearance across the given label batches."""
    types: List[str] = []
    for batch in label_batches:
        if batch is None:
            continue
        for labels in batch:
            for name in labels:
                if name == "O":
                    continue
                if len(name) < 3 or name[1] != "-" or name[0] not in ("B", "I"):
                    raise ValueError(f"malformed label string: {name!r}")
                t = name[2:]
                if t not in types:
                    types.append(t)
    return TagSet(tuple(types))


def _to_ids(tags: TagSet, labels: Sequence[str]) -> Tuple[int, ...]:
    return tuple(tags.parse_label(name) for name in labels)


def _to_names(tags: TagSet, ids: Sequence[int]) -> List[str]:
    return [tags.name_of(i) for i in ids]


class CrfTagger(BaseEstimator):
    """Supervised linear-chain CRF sequence tagger over hashed window features."""

    def __init__(
        self,
        learning_rate: float = 5e-3,
        epochs: int = 15,
        batch_size: int = 32,
        seed: int = 0,
        optimizer: str = "adam",
        hash_dim: int = 1 << 18,
    ):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.optimizer = optimizer
        self.hash_dim = hash_dim

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            optimizer=self.optimizer,
            hash_dim=self.hash_dim,
        )

    def fit(self, X, y):
        sents = check_sentences(X)
        labels = check_aligned_labels(sents, y)
        self.tags_ = infer_tagset(labels)
        data = [StrongExample(s, _to_ids(self.tags_, l), self.tags_) for s, l in zip(sents, labels)]
        self.model_, self.loss_trace_ = train_supervised(data, self._config())
        return self

    def _fitted_model(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this tagger has not been fitted yet")
        return self.model_

    def predict(self, X) -> List[List[str]]:
        m = self._fitted_model()
        preds = decode_many(m, check_sentences(X))
        return [_to_names(self.tags_, p) for p in preds]

    def predict_score(self, X) -> np.ndarray:
        """Per-sentence mean-token log-posterior of the decoded path."""
        m = self._fitted_model()
        return np.array([calibration.prediction_score(m, s) for s in check_sentences(X)])

    def score(self, X, y) -> float:
        """Micro span F1 against gold label strings."""
        m = self._fitted_model()
        sents = check_sentences(X)
        labels = check_aligned_labels(sents, y)
        gold = [_to_ids(self.tags_, l) for l in labels]
        pred = decode_many(m, sents)
        return span_prf(pred, gold, self.tags_).span_f1


class WeaklySupervisedTagger(BaseEstimator):
    """CRF tagger trained with the staged weak-supervision recipe.

    ``fit(X, y, weak_X=..., weak_y=..., dev_X=..., dev_y=...)`` runs label
    completion, confidence calibration, noise-aware training and final
    fine-tuning; without weak data it degenerates to supervised training.
    """

    def __init__(
        self,
        learning_rate: float = 5e-3,
        batch_size: int = 32,
        seed: int = 0,
        optimizer: str = "adam",
        hash_dim: int = 1 << 18,
        init_epochs: int = 5,
        na_epochs: int = 3,
        ft_epochs: int = 10,
        rounds: int = 1,
        num_bins: int = 10,
        drop_mismatches: bool = False,
    ):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed
        self.optimizer = optimizer
        self.hash_dim = hash_dim
        self.init_epochs = init_epochs
        self.na_epochs = na_epochs
        self.ft_epochs = ft_epochs
        self.rounds = rounds
        self.num_bins = num_bins
        self.drop_mismatches = drop_mismatches

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.seed,
            optimizer=self.optimizer,
            hash_dim=self.hash_dim,
            init_epochs=self.init_epochs,
            na_epochs=self.na_epochs,
            ft_epochs=self.ft_epochs,
            stage2_rounds=self.rounds,
            num_bins=self.num_bins,
            drop_mismatches=self.drop_mismatches,
        )

    def fit(self, X, y, weak_X=None, weak_y=None, dev_X=None, dev_y=None):
        sents = check_sentences(X)
        labels = check_aligned_labels(sents, y)
        weak_sents = check_sentences(weak_X) if weak_X is not None else []
        weak_labels = check_aligned_labels(weak_sents, weak_y) if weak_X is not None else []
        if dev_X is not None:
            dev_sents = check_sentences(dev_X)
            dev_labels = check_aligned_labels(dev_sents, dev_y)
        elif weak_sents:
            raise ValueError("weak training data requires a dev split for calibration")
        else:
            dev_sents, dev_labels = sents, labels
        self.tags_ = infer_tagset(labels, weak_labels or None, dev_labels)
        strong = [StrongExample(s, _to_ids(self.tags_, l), self.tags_) for s, l in zip(sents, labels)]
        dev = [StrongExample(s, _to_ids(self.tags_, l), self.tags_) for s, l in zip(dev_sents, dev_labels)]
        weak = [
            WeakExample(s, _to_ids(self.tags_, l), self.tags_)
            for s, l in zip(weak_sents, weak_labels)
        ]
        result = run_pipeline(strong, dev, weak, self._config())
        self.model_ = result.model
        self.stage_report_ = result.report
        return self

    def predict(self, X) -> List[List[str]]:
        if not hasattr(self, "model_"):
            raise NotFittedError("this tagger has not been fitted yet")
        preds = decode_many(self.model_, check_sentences(X))
        return [_to_names(self.tags_, p) for p in preds]

    def score(self, X, y) -> float:
        if not hasattr(self, "model_"):
            raise NotFittedError("this tagger has not been fitted yet")
        sents = check_sentences(X)
        labels = check_aligned_labels(sents, y)
        gold = [_to_ids(self.tags_, l) for l in labels]
        pred = decode_many(self.model_, sents)
        return span_prf(pred, gold, self.tags_).span_f1
