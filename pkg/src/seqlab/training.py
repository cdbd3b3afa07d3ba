"""Training objectives, baseline trainers, and the staged pipeline.

All trainers share one mini-batch loop over a uniformly shuffled pool of
per-sentence loss items.  Batch gradients are reduced in a fixed order and the
optimizer updates only the touched encoder rows, so a given (data, config,
seed) reproduces the final weights bit-exactly.

Weak-supervision objectives:

* noise-aware: conf * nll(corrected) + (1 - conf) * unlikelihood(corrected)
* plain / weighted combination: nll on raw weak labels (optionally scaled)
* partial: marginal nll with non-entity weak positions left unconstrained
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import calibration, crf
from .completion import CompletionStats, complete, find_bio_mismatches, matched_fraction
from .core import O_ID, Sentence, StrongExample, TagSet, WeakExample
from .features import DEFAULT_HASH_DIM, sentence_features
from .features import emissions as features_emissions
from .metrics import Metrics, span_prf
from .model import CrfModel, decode_many, new_model

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Knobs shared by every trainer; loadable from a flat key=value file."""

    learning_rate: float = 5e-3
    epochs: int = 15
    batch_size: int = 32
    seed: int = 0
    gamma: float = 1.0
    optimizer: str = "adam"
    stage2_rounds: int = 1
    drop_mismatches: bool = False
    num_bins: int = 10
    init_epochs: int = 5
    na_epochs: int = 3
    ft_epochs: int = 10
    hash_dim: int = DEFAULT_HASH_DIM

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        for name in ("epochs", "batch_size", "init_epochs", "na_epochs", "ft_epochs", "num_bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.stage2_rounds not in (1, 2):
            raise ValueError("stage2_rounds must be 1 or 2")
        if self.hash_dim < 2 or self.hash_dim & (self.hash_dim - 1):
            raise ValueError("hash_dim must be a power of two")

    _BOOL_KEYS = ("drop_mismatches",)
    _INT_KEYS = (
        "epochs", "batch_size", "seed", "stage2_rounds", "num_bins",
        "init_epochs", "na_epochs", "ft_epochs", "hash_dim",
    )
    _FLOAT_KEYS = ("learning_rate", "gamma")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "TrainConfig":
        kwargs: Dict[str, object] = {}
        known = set(cls._BOOL_KEYS) | set(cls._INT_KEYS) | set(cls._FLOAT_KEYS) | {"optimizer"}
        for key, raw in mapping.items():
            if key not in known:
                raise ValueError(f"unknown training config key: {key!r}")
            if key in cls._BOOL_KEYS:
                low = str(raw).lower()
                if low not in ("true", "false", "1", "0"):
                    raise ValueError(f"{key} must be a boolean, got {raw!r}")
                kwargs[key] = low in ("true", "1")
            elif key in cls._INT_KEYS:
                kwargs[key] = int(raw)
            elif key in cls._FLOAT_KEYS:
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)

    def to_mapping(self) -> Dict[str, str]:
        return {
            "learning_rate": repr(self.learning_rate),
            "epochs": str(self.epochs),
            "batch_size": str(self.batch_size),
            "seed": str(self.seed),
            "gamma": repr(self.gamma),
            "optimizer": self.optimizer,
            "stage2_rounds": str(self.stage2_rounds),
            "drop_mismatches": str(self.drop_mismatches).lower(),
            "num_bins": str(self.num_bins),
            "init_epochs": str(self.init_epochs),
            "na_epochs": str(self.na_epochs),
            "ft_epochs": str(self.ft_epochs),
            "hash_dim": str(self.hash_dim),
        }


def derive_seed(master: int, label: str) -> int:
    """Expand one master seed into independent per-stage seeds."""
    digest = hashlib.blake2b(f"{master}:{label}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


# ---------------------------------------------------------------------------
# loss items and the shared optimization loop


@dataclass
class _Item:
    flat_ids: np.ndarray           # concatenated feature ids, token-major
    offsets: np.ndarray            # feature counts per token, as reduceat offsets
    counts: np.ndarray
    kind: str                      # "nll" | "na" | "partial"
    y: Optional[np.ndarray]
    allowed: Optional[np.ndarray]
    weight: float
    confidence: float


def _prep(
    sentence: Sentence,
    hash_dim: int,
    kind: str,
    y: Optional[Sequence[int]] = None,
    allowed: Optional[np.ndarray] = None,
    weight: float = 1.0,
    confidence: float = 1.0,
) -> _Item:
    feats = sentence_features(sentence, hash_dim)
    counts = np.array([len(f) for f in feats], dtype=np.intp)
    offsets = np.zeros(len(feats), dtype=np.intp)
    np.cumsum(counts[:-1], out=offsets[1:])
    flat = np.fromiter((i for ids in feats for i in ids), dtype=np.intp, count=int(counts.sum()))
    ya = None if y is None else np.asarray(y, dtype=np.intp)
    return _Item(flat, offsets, counts, kind, ya, allowed, weight, confidence)


def _item_emissions(weights: np.ndarray, item: _Item) -> np.ndarray:
    return np.add.reduceat(weights[item.flat_ids], item.offsets, axis=0)


def _item_loss_and_grads(m: CrfModel, item: _Item) -> Tuple[float, crf.CrfGrads]:
    em = _item_emissions(m.encoder.weights, item)
    tr = m.transitions
    if item.kind == "nll":
        return crf.nll_and_grad(em, tr, item.y)
    if item.kind == "na":
        return crf.noise_aware_loss_and_grad(em, tr, item.y, item.confidence)
    if item.kind == "partial":
        return crf.partial_nll_and_grad(em, tr, item.allowed)
    raise AssertionError(f"unknown item kind {item.kind!r}")


class _Sgd:
    def __init__(self, m: CrfModel, lr: float):
        self.m = m
        self.lr = lr

    def step(self, row_ids, row_grads, g_trans, g_start, g_stop) -> None:
        m, lr = self.m, self.lr
        m.encoder.weights[row_ids] -= lr * row_grads
        m.transitions.trans[...] -= lr * g_trans
        m.transitions.start[...] -= lr * g_start
        m.transitions.stop[...] -= lr * g_stop


class _Adam:
    """Adam with lazy row updates: moments of untouched encoder rows do not
    decay, which keeps each step proportional to the batch footprint."""

    def __init__(self, m: CrfModel, lr: float):
        self.m = m
        self.lr = lr
        self.t = 0
        w = m.encoder.weights
        self.m_w = np.zeros_like(w)
        self.v_w = np.zeros_like(w)
        self.dense: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = [
            (arr, np.zeros_like(arr), np.zeros_like(arr))
            for arr in (m.transitions.trans, m.transitions.start, m.transitions.stop)
        ]

    def step(self, row_ids, row_grads, g_trans, g_start, g_stop) -> None:
        self.t += 1
        bc1 = 1.0 - _ADAM_BETA1 ** self.t
        bc2 = 1.0 - _ADAM_BETA2 ** self.t
        mw = _ADAM_BETA1 * self.m_w[row_ids] + (1 - _ADAM_BETA1) * row_grads
        vw = _ADAM_BETA2 * self.v_w[row_ids] + (1 - _ADAM_BETA2) * row_grads * row_grads
        self.m_w[row_ids] = mw
        self.v_w[row_ids] = vw
        self.m.encoder.weights[row_ids] -= self.lr * (mw / bc1) / (np.sqrt(vw / bc2) + _ADAM_EPS)
        for (arr, mom, vel), g in zip(self.dense, (g_trans, g_start, g_stop)):
            mom *= _ADAM_BETA1
            mom += (1 - _ADAM_BETA1) * g
            vel *= _ADAM_BETA2
            vel += (1 - _ADAM_BETA2) * g * g
            arr -= self.lr * (mom / bc1) / (np.sqrt(vel / bc2) + _ADAM_EPS)


def _make_optimizer(m: CrfModel, cfg: TrainConfig):
    return _Adam(m, cfg.learning_rate) if cfg.optimizer == "adam" else _Sgd(m, cfg.learning_rate)


def _run_loop(
    items: List[_Item],
    tags: TagSet,
    cfg: TrainConfig,
    epochs: int,
    init_model: Optional[CrfModel],
) -> Tuple[CrfModel, List[float]]:
    if not items:
        raise ValueError("cannot train on an empty dataset")
    if init_model is not None and init_model.tags != tags:
        raise ValueError("init model tag set does not match the training data")
    rng = np.random.default_rng(cfg.seed)
    m = init_model.copy() if init_model is not None else new_model(tags, cfg.hash_dim, rng)
    opt = _make_optimizer(m, cfg)
    L = tags.num_labels
    trace: List[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(items))
        epoch_loss = 0.0
        for lo in range(0, len(items), cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            ids_parts: List[np.ndarray] = []
            row_parts: List[np.ndarray] = []
            g_trans = np.zeros((L, L))
            g_start = np.zeros(L)
            g_stop = np.zeros(L)
            batch_loss = 0.0
            for idx in batch:
                item = items[int(idx)]
                loss, g = _item_loss_and_grads(m, item)
                w = item.weight
                batch_loss += w * loss
                ids_parts.append(item.flat_ids)
                row_parts.append(np.repeat(w * g.d_em, item.counts, axis=0))
                g_trans += w * g.d_trans
                g_start += w * g.d_start
                g_stop += w * g.d_stop
            if not np.isfinite(batch_loss):
                raise FloatingPointError("training loss is not finite; aborting")
            n = len(batch)
            all_ids = np.concatenate(ids_parts)
            all_rows = np.concatenate(row_parts)
            uids, inv = np.unique(all_ids, return_inverse=True)
            gsum = np.zeros((len(uids), L))
            np.add.at(gsum, inv, all_rows)
            opt.step(uids, gsum / n, g_trans / n, g_start / n, g_stop / n)
            epoch_loss += batch_loss
        trace.append(epoch_loss / len(items))
    return m, trace


# ---------------------------------------------------------------------------
# public objectives and trainers


def noise_aware_loss(m: CrfModel, ex: WeakExample) -> float:
    """conf * nll(corrected) + (1 - conf) * log-unlikelihood(corrected), mask off."""
    if ex.corrected is None or ex.confidence is None:
        raise ValueError("weak example needs corrected labels and a confidence")
    em = features_emissions(m.encoder, ex.sentence)
    loss, _ = crf.noise_aware_loss_and_grad(em, m.transitions, ex.corrected, ex.confidence)
    return loss


def _tags_of(*datasets: Sequence) -> TagSet:
    for data in datasets:
        for ex in data:
            return ex.tags
    raise ValueError("cannot train on an empty dataset")


def _feature_dim(cfg: TrainConfig, init_model: Optional[CrfModel]) -> int:
    # a continued model fixes the feature space, whatever the config says
    return init_model.encoder.hash_dim if init_model is not None else cfg.hash_dim


def train_supervised(
    data: Sequence[StrongExample],
    cfg: TrainConfig,
    *,
    epochs: Optional[int] = None,
    init_model: Optional[CrfModel] = None,
) -> Tuple[CrfModel, List[float]]:
    """Mini-batch training of the mean negative log-likelihood."""
    tags = _tags_of(data)
    hd = _feature_dim(cfg, init_model)
    items = [_prep(ex.sentence, hd, "nll", y=ex.gold) for ex in data]
    return _run_loop(items, tags, cfg, cfg.epochs if epochs is None else epochs, init_model)


def train_noise_aware(
    strong: Sequence[StrongExample],
    weak: Sequence[WeakExample],
    cfg: TrainConfig,
    *,
    epochs: Optional[int] = None,
    init_model: Optional[CrfModel] = None,
) -> Tuple[CrfModel, List[float]]:
    """Mean loss over the concatenated pool: nll on strong sentences,
    noise-aware loss on completed weak sentences."""
    tags = _tags_of(strong, weak)
    hd = _feature_dim(cfg, init_model)
    items = [_prep(ex.sentence, hd, "nll", y=ex.gold) for ex in strong]
    for ex in weak:
        if ex.corrected is None or ex.confidence is None:
            raise ValueError("noise-aware training needs corrected labels and confidences")
        items.append(
            _prep(ex.sentence, hd, "na", y=ex.corrected, confidence=ex.confidence)
        )
    return _run_loop(items, tags, cfg, cfg.na_epochs if epochs is None else epochs, init_model)


def train_wsl(
    strong: Sequence[StrongExample],
    weak_raw: Sequence[WeakExample],
    cfg: TrainConfig,
    mode: str = "plain",
    *,
    epochs: Optional[int] = None,
    init_model: Optional[CrfModel] = None,
) -> Tuple[CrfModel, List[float]]:
    """The naive weak-supervision combinations.

    plain    -- nll on raw weak labels, same weight as strong sentences
    weighted -- weak sentences scaled by cfg.gamma (gamma=1 is plain exactly;
                gamma=0 excludes them, matching strong-only training exactly)
    partial  -- entity positions pinned to their weak label, O positions
                marginalized out
    """
    if mode not in ("plain", "weighted", "partial"):
        raise ValueError(f"unknown WSL mode {mode!r}")
    tags = _tags_of(strong, weak_raw)
    gamma = cfg.gamma if mode == "weighted" else 1.0
    hd = _feature_dim(cfg, init_model)
    items = [_prep(ex.sentence, hd, "nll", y=ex.gold) for ex in strong]
    for ex in weak_raw:
        if mode == "partial":
            allowed = np.zeros((len(ex.sentence), tags.num_labels), dtype=bool)
            for i, w in enumerate(ex.weak):
                if w == O_ID:
                    allowed[i, :] = True
                else:
                    allowed[i, w] = True
            items.append(_prep(ex.sentence, hd, "partial", allowed=allowed))
        elif gamma > 0.0:
            items.append(_prep(ex.sentence, hd, "nll", y=ex.weak, weight=gamma))
    return _run_loop(items, tags, cfg, cfg.epochs if epochs is None else epochs, init_model)


def self_train(
    strong: Sequence[StrongExample],
    unlabeled: Sequence[Sentence],
    cfg: TrainConfig,
    *,
    epochs: Optional[int] = None,
) -> Tuple[CrfModel, List[float]]:
    """Two-phase self-training: supervised model, Viterbi pseudo labels for the
    unlabeled pool, then a fresh training run on strong + pseudo-labeled data."""
    n_epochs = cfg.epochs if epochs is None else epochs
    teacher, _ = train_supervised(strong, cfg, epochs=n_epochs)
    pseudo = decode_many(teacher, unlabeled)
    tags = _tags_of(strong)
    items = [_prep(ex.sentence, cfg.hash_dim, "nll", y=ex.gold) for ex in strong]
    items += [_prep(s, cfg.hash_dim, "nll", y=y) for s, y in zip(unlabeled, pseudo)]
    return _run_loop(items, tags, cfg, n_epochs, None)


# ---------------------------------------------------------------------------
# staged pipeline


@dataclass(frozen=True)
class StageEntry:
    stage: str
    round: int
    dev_metrics: Optional[Metrics]
    info: Dict[str, object] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage,
            "round": self.round,
            "dev_metrics": self.dev_metrics.to_json_dict() if self.dev_metrics else None,
            "info": self.info,
        }


@dataclass(frozen=True)
class PipelineReport:
    stages: Tuple[StageEntry, ...]
    degenerate: bool
    test_metrics: Optional[Metrics] = None

    def to_json_dict(self) -> dict:
        return {
            "degenerate": self.degenerate,
            "stages": [s.to_json_dict() for s in self.stages],
            "test_metrics": self.test_metrics.to_json_dict() if self.test_metrics else None,
        }


@dataclass(frozen=True)
class PipelineResult:
    model: CrfModel
    report: PipelineReport
    stage_models: Dict[str, CrfModel] = field(default_factory=dict)


def _stage_cfg(cfg: TrainConfig, label: str) -> TrainConfig:
    return replace(cfg, seed=derive_seed(cfg.seed, label))


def _dev_eval(m: CrfModel, dev: Sequence[StrongExample]) -> Metrics:
    pred = decode_many(m, [ex.sentence for ex in dev])
    return span_prf(pred, [ex.gold for ex in dev], m.tags)


def _complete_with_scores(
    m: CrfModel, weak_raw: Sequence[WeakExample], drop_mismatches: bool
) -> Tuple[List[WeakExample], List[float], CompletionStats]:
    """Completion pass that also records each sentence's prediction score so
    the calibration step does not have to decode again."""
    out: List[WeakExample] = []
    scores: List[float] = []
    mismatched = dropped = 0
    for ex in weak_raw:
        em = features_emissions(m.encoder, ex.sentence)
        predicted, path_score = crf.viterbi(em, m.transitions)
        corrected = complete(ex.weak, predicted)
        bad = bool(find_bio_mismatches(corrected, ex.tags))
        mismatched += int(bad)
        if bad and drop_mismatches:
            dropped += 1
            continue
        out.append(ex.with_completion(predicted, corrected))
        scores.append((path_score - crf.log_partition(em, m.transitions)) / len(ex.sentence))
    return out, scores, CompletionStats(len(weak_raw), mismatched, dropped)


def run_pipeline(
    strong_train: Sequence[StrongExample],
    strong_dev: Sequence[StrongExample],
    weak_raw: Sequence[WeakExample],
    cfg: TrainConfig,
    *,
    strong_test: Optional[Sequence[StrongExample]] = None,
    keep_stage_models: bool = False,
) -> PipelineResult:
    """The full staged recipe.

    Per round: (a) supervised model on strong data (round 1 only; later rounds
    reuse the previous fine-tuned model), (b) weak label completion, (c)
    calibration on the dev split and confidence attachment, (d) noise-aware
    training over strong + completed weak data, then (e) fine-tuning on the
    strong data again.  An empty weak pool degenerates to supervised training.
    """
    if not strong_train or not strong_dev:
        raise ValueError("pipeline needs non-empty strong train and dev sets")
    stages: List[StageEntry] = []
    stage_models: Dict[str, CrfModel] = {}

    model, _ = train_supervised(strong_train, _stage_cfg(cfg, "init-train"), epochs=cfg.init_epochs)
    stages.append(StageEntry("init-train", 1, _dev_eval(model, strong_dev), {"epochs": cfg.init_epochs}))
    if keep_stage_models:
        stage_models["init"] = model.copy()

    degenerate = not weak_raw
    if degenerate:
        model, _ = train_supervised(
            strong_train, _stage_cfg(cfg, "finetune-r1"), epochs=cfg.ft_epochs, init_model=model
        )
        stages.append(StageEntry("finetune", 1, _dev_eval(model, strong_dev), {"epochs": cfg.ft_epochs}))
    else:
        for rnd in range(1, cfg.stage2_rounds + 1):
            completed, scores, stats = _complete_with_scores(model, weak_raw, cfg.drop_mismatches)
            stages.append(StageEntry("complete", rnd, None, stats.to_json_dict()))

            table = calibration.fit(model, strong_dev, cfg.num_bins)
            confident: List[WeakExample] = []
            for ex, score in zip(completed, scores):
                p_pred = calibration.predict_confidence(table, score)
                confident.append(
                    ex.with_confidence(calibration.combined_confidence(matched_fraction(ex.weak), p_pred))
                )
            stages.append(
                StageEntry("calibrate", rnd, None, {"num_bins": table.num_bins, "counts": list(table.counts)})
            )

            model, _ = train_noise_aware(
                strong_train, confident, _stage_cfg(cfg, f"noise-aware-r{rnd}"),
                epochs=cfg.na_epochs, init_model=model,
            )
            stages.append(
                StageEntry("noise-aware", rnd, _dev_eval(model, strong_dev), {"epochs": cfg.na_epochs})
            )
            if keep_stage_models:
                stage_models[f"noise-aware-r{rnd}"] = model.copy()

            model, _ = train_supervised(
                strong_train, _stage_cfg(cfg, f"finetune-r{rnd}"), epochs=cfg.ft_epochs, init_model=model
            )
            stages.append(StageEntry("finetune", rnd, _dev_eval(model, strong_dev), {"epochs": cfg.ft_epochs}))
            if keep_stage_models:
                stage_models[f"finetune-r{rnd}"] = model.copy()

    test_metrics = None
    if strong_test:
        pred = decode_many(model, [ex.sentence for ex in strong_test])
        test_metrics = span_prf(pred, [ex.gold for ex in strong_test], model.tags)
    report = PipelineReport(tuple(stages), degenerate, test_metrics)
    return PipelineResult(model, report, stage_models)
