"""seqlab: weakly-supervised BIO sequence labeling with a linear-chain CRF.

The package combines gazetteer weak labeling, weak label completion,
histogram-binning confidence calibration and a noise-aware training objective
into a staged pipeline, with the naive weak-supervision combinations and
self-training as baselines.
"""

from .calibration import CalibrationTable, combined_confidence, predict_confidence, prediction_score
from .completion import complete, complete_dataset, find_bio_mismatches, matched_fraction
from .core import (
    LabelSeq,
    Sentence,
    StrongExample,
    TagSet,
    WeakExample,
    is_bio_valid,
    make_sentence,
)
from .estimator import CrfTagger, WeaklySupervisedTagger
from .gazetteer import Gazetteer, Matcher, annotate, compile_matcher, load_gazetteer, weak_label_quality
from .metrics import Metrics, Span, extract_spans, label_distribution, sentence_accuracy, span_prf, token_accuracy
from .model import CrfModel, decode, decode_many, new_model
from .synth import SynthCorpus, SynthSpec, degrade, generate, reference_spec
from .training import (
    PipelineReport,
    PipelineResult,
    StageEntry,
    TrainConfig,
    derive_seed,
    noise_aware_loss,
    run_pipeline,
    self_train,
    train_noise_aware,
    train_supervised,
    train_wsl,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationTable",
    "CrfModel",
    "CrfTagger",
    "Gazetteer",
    "LabelSeq",
    "Matcher",
    "Metrics",
    "PipelineReport",
    "PipelineResult",
    "Sentence",
    "Span",
    "StageEntry",
    "StrongExample",
    "SynthCorpus",
    "SynthSpec",
    "TagSet",
    "TrainConfig",
    "WeakExample",
    "WeaklySupervisedTagger",
    "annotate",
    "combined_confidence",
    "compile_matcher",
    "complete",
    "complete_dataset",
    "decode",
    "decode_many",
    "degrade",
    "derive_seed",
    "extract_spans",
    "find_bio_mismatches",
    "generate",
    "is_bio_valid",
    "label_distribution",
    "load_gazetteer",
    "make_sentence",
    "matched_fraction",
    "new_model",
    "noise_aware_loss",
    "predict_confidence",
    "prediction_score",
    "reference_spec",
    "run_pipeline",
    "self_train",
    "sentence_accuracy",
    "span_prf",
    "token_accuracy",
    "train_noise_aware",
    "train_supervised",
    "train_wsl",
    "weak_label_quality",
]
