"""Command line interface exposing every stage and baseline as a subcommand.

All randomness flows from a single --seed (or the config file's seed),
expanded per stage with the documented derivation in
:func:`seqlab.training.derive_seed`.  Every subcommand writes its outputs
atomically and deterministically, so re-running a command with the same
inputs and seed reproduces each output file byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import calibration, io, synth
from .completion import complete_dataset, matched_fraction
from .core import StrongExample, TagSet, WeakExample
from .gazetteer import compile_matcher, annotate, load_gazetteer, write_gazetteer
from .metrics import label_distribution, span_prf
from .model import decode_many
from .training import (
    TrainConfig,
    run_pipeline,
    self_train,
    train_noise_aware,
    train_supervised,
    train_wsl,
)

_CONFIG_FLAGS = (
    # (flag, config key, type)
    ("--learning-rate", "learning_rate", float),
    ("--epochs", "epochs", int),
    ("--batch-size", "batch_size", int),
    ("--seed", "seed", int),
    ("--gamma", "gamma", float),
    ("--optimizer", "optimizer", str),
    ("--rounds", "stage2_rounds", int),
    ("--bins", "num_bins", int),
    ("--init-epochs", "init_epochs", int),
    ("--na-epochs", "na_epochs", int),
    ("--ft-epochs", "ft_epochs", int),
    ("--hash-dim", "hash_dim", int),
)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    for flag, key, typ in _CONFIG_FLAGS:
        p.add_argument(flag, dest=f"cfg_{key}", type=typ, default=None)
    p.add_argument(
        "--drop-mismatches", dest="cfg_drop_mismatches", action="store_const", const=True, default=None
    )


def _resolve_config(args: argparse.Namespace) -> Tuple[TrainConfig, Dict[str, str]]:
    """Config file first, then CLI flags override individual keys."""
    mapping: Dict[str, str] = {}
    if getattr(args, "config", None):
        mapping.update(io.load_config(args.config))
    for _, key, _ in _CONFIG_FLAGS:
        val = getattr(args, f"cfg_{key}", None)
        if val is not None:
            mapping[key] = str(val)
    if getattr(args, "cfg_drop_mismatches", None) is not None:
        mapping["drop_mismatches"] = "true"
    known = set(TrainConfig().to_mapping())
    train_keys = {k: v for k, v in mapping.items() if k in known}
    return TrainConfig.from_mapping(train_keys), mapping


def _provenance(cfg: TrainConfig, command: str, stage: str, extra: Optional[Dict[str, str]] = None) -> dict:
    hashed = dict(cfg.to_mapping())
    if extra:
        hashed.update(extra)
    return {
        "command": command,
        "stage": stage,
        "seed": cfg.seed,
        "config_hash": io.config_hash(hashed),
    }


def _load_strong(path: str, tags: TagSet) -> List[StrongExample]:
    return [StrongExample(s, y, tags) for s, y in io.read_conll(path, tags)]


def _load_weak(path: str, tags: TagSet) -> List[WeakExample]:
    return [WeakExample(s, y, tags) for s, y in io.read_conll(path, tags)]


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args: argparse.Namespace) -> int:
    mapping = io.load_config(args.config)
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    spec = synth.spec_from_config(mapping)
    corpus = synth.generate(spec)
    degraded = synth.degrade(corpus.gazetteer, spec.rho, spec.beta, spec.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tags = corpus.tags
    for name, split in (
        ("train", corpus.train), ("dev", corpus.dev), ("test", corpus.test), ("weak_gold", corpus.weak_gold),
    ):
        io.write_conll([(ex.sentence, ex.gold) for ex in split], tags, out / f"{name}.conll")
    write_gazetteer(corpus.gazetteer, out / "gazetteer_full.tsv")
    write_gazetteer(degraded, out / "gazetteer.tsv")
    print(f"wrote corpus ({len(corpus.train)}/{len(corpus.dev)}/{len(corpus.test)} strong, "
          f"{len(corpus.weak_gold)} weak pool) and gazetteers to {out}")
    return 0


def _cmd_weaklabel(args: argparse.Namespace) -> int:
    gaz = load_gazetteer(args.gazetteer, case_insensitive=not args.case_sensitive)
    raw = io.read_conll_raw(args.input)
    gaz_types: List[str] = []
    for _, t in gaz.entries:
        if t not in gaz_types:
            gaz_types.append(t)
    tags = TagSet(tuple(gaz_types))
    matcher = compile_matcher(gaz, tags)
    rows = []
    dropped = 0
    for tokens, _ in raw:
        labels = annotate(matcher, tokens)
        if not args.keep_unmatched and all(l == 0 for l in labels):
            dropped += 1
            continue
        rows.append((tokens, labels))
    if not rows:
        raise ValueError("no sentences left after dropping unmatched ones; try --keep-unmatched")
    io.write_conll(rows, tags, args.out)
    print(f"annotated {len(rows)} sentences ({dropped} unmatched dropped) -> {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg, _ = _resolve_config(args)
    raw = io.read_conll_raw(args.train)
    tags = io.infer_tagset(raw)
    data = [StrongExample(s, y, tags) for s, y in io.raw_to_ids(raw, tags)]
    m, trace = train_supervised(data, cfg)
    io.save_model(m, args.out, _provenance(cfg, "train", "supervised"))
    print(f"trained on {len(data)} sentences, final epoch loss {trace[-1]:.4f} -> {args.out}")
    return 0


def _cmd_complete(args: argparse.Namespace) -> int:
    cfg, _ = _resolve_config(args)
    m = io.load_model(args.model)
    weak = _load_weak(args.weak, m.tags)
    drop = cfg.drop_mismatches
    completed, stats = complete_dataset(weak, m, drop_mismatches=drop)
    io.write_conll([(ex.sentence, ex.corrected) for ex in completed], m.tags, args.out)
    if args.report:
        io.write_json(stats.to_json_dict(), args.report)
    print(
        f"completed {stats.sentences} sentences: {stats.mismatched_sentences} with BIO mismatches "
        f"({100 * stats.mismatch_fraction:.2f}%), {stats.dropped_sentences} dropped -> {args.out}"
    )
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    cfg, _ = _resolve_config(args)
    m = io.load_model(args.model)
    dev = _load_strong(args.dev, m.tags)
    table = calibration.fit(m, dev, cfg.num_bins)
    calibration.save_table(table, args.out)
    print(f"fitted {table.num_bins} bins on {len(dev)} sentences -> {args.out}")
    return 0


def _cmd_train_na(args: argparse.Namespace) -> int:
    cfg, _ = _resolve_config(args)
    init = io.load_model(args.model)
    tags = init.tags
    strong = _load_strong(args.strong, tags)
    weak_raw = io.read_conll(args.weak_raw, tags)
    corrected = io.read_conll(args.corrected, tags)
    if len(weak_raw) != len(corrected) or any(a[0] != b[0] for a, b in zip(weak_raw, corrected)):
        raise ValueError("--weak-raw and --corrected files do not align sentence by sentence")
    table = calibration.load_table(args.calibration)
    weak: List[WeakExample] = []
    for (tokens, w), (_, c) in zip(weak_raw, corrected):
        score = calibration.prediction_score(init, tokens)
        conf = calibration.combined_confidence(
            matched_fraction(w), calibration.predict_confidence(table, score)
        )
        weak.append(WeakExample(tokens, w, tags, corrected=c, confidence=conf))
    m, trace = train_noise_aware(strong, weak, cfg, init_model=init)
    io.save_model(m, args.out, _provenance(cfg, "train-na", "noise-aware"))
    print(f"noise-aware training on {len(strong)}+{len(weak)} sentences, "
          f"final epoch loss {trace[-1]:.4f} -> {args.out}")
    return 0


def _cmd_finetune(args: argparse.Namespace) -> int:
    cfg, _ = _resolve_config(args)
    init = io.load_model(args.model)
    data = _load_strong(args.train, init.tags)
    m, trace = train_supervised(data, cfg, epochs=cfg.ft_epochs, init_model=init)
    io.save_model(m, args.out, _provenance(cfg, "finetune", "finetune"))
    print(f"fine-tuned on {len(data)} sentences, final epoch loss {trace[-1]:.4f} -> {args.out}")
    return 0


def _cmd_baseline(args: argparse.Namespace) -> int:
    cfg, mapping = _resolve_config(args)
    mode = args.mode
    if mode == "weighted" and "gamma" not in mapping:
        raise ValueError("weighted mode requires --gamma (or gamma= in the config)")
    raw_strong = io.read_conll_raw(args.strong)
    if mode == "sst":
        if not args.unlabeled:
            raise ValueError("sst mode requires --unlabeled")
        raw_unlabeled = io.read_conll_raw(args.unlabeled)
        tags = io.infer_tagset(raw_strong, raw_unlabeled)
        strong = [StrongExample(s, y, tags) for s, y in io.raw_to_ids(raw_strong, tags)]
        sentences = [s for s, _ in raw_unlabeled]
        m, _ = self_train(strong, sentences, cfg)
        extra = {"mode": "sst"}
    else:
        if not args.weak:
            raise ValueError(f"{mode} mode requires --weak")
        raw_weak = io.read_conll_raw(args.weak)
        tags = io.infer_tagset(raw_strong, raw_weak)
        strong = [StrongExample(s, y, tags) for s, y in io.raw_to_ids(raw_strong, tags)]
        weak = [WeakExample(s, y, tags) for s, y in io.raw_to_ids(raw_weak, tags)]
        m, _ = train_wsl(strong, weak, cfg, mode="plain" if mode == "wsl" else mode)
        # weighted with gamma=1 is exactly the plain combination
        canonical_mode = "wsl" if (mode == "weighted" and cfg.gamma == 1.0) else mode
        extra = {"mode": canonical_mode}
    io.save_model(m, args.out, _provenance(cfg, "baseline", f"baseline-{extra['mode']}", extra))
    print(f"baseline mode={mode} -> {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    raw_gold = io.read_conll_raw(args.gold)
    if bool(args.model) == bool(args.pred):
        raise ValueError("exactly one of --model or --pred is required")
    if args.model:
        m = io.load_model(args.model)
        tags = m.tags
        gold = io.raw_to_ids(raw_gold, tags)
        pred_labels = decode_many(m, [s for s, _ in gold])
    else:
        raw_pred = io.read_conll_raw(args.pred)
        tags = io.infer_tagset(raw_gold, raw_pred)
        gold = io.raw_to_ids(raw_gold, tags)
        pred = io.raw_to_ids(raw_pred, tags)
        if len(pred) != len(gold) or any(p[0] != g[0] for p, g in zip(pred, gold)):
            raise ValueError("--pred and --gold files do not align sentence by sentence")
        pred_labels = [y for _, y in pred]
    metrics = span_prf(pred_labels, [y for _, y in gold], tags)
    io.write_json(metrics.to_json_dict(), args.out)
    print(f"span F1 {metrics.span_f1:.4f} (P {metrics.span_p:.4f} / R {metrics.span_r:.4f}) -> {args.out}")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    named: List[Tuple[str, List]] = []
    raws = []
    for spec_item in args.source:
        if "=" not in spec_item:
            raise ValueError(f"--source expects NAME=PATH, got {spec_item!r}")
        name, path = spec_item.split("=", 1)
        raw = io.read_conll_raw(path)
        raws.append(raw)
        named.append((name, raw))
    tags = io.infer_tagset(*raws)
    table = label_distribution(
        [(name, [y for _, y in io.raw_to_ids(raw, tags)]) for name, raw in named], tags
    )
    io.write_json(table, args.out)
    print(f"label distribution for {len(named)} sources -> {args.out}")
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    cfg, _ = _resolve_config(args)
    raw_train = io.read_conll_raw(args.train)
    raw_dev = io.read_conll_raw(args.dev)
    raw_weak = io.read_conll_raw(args.weak) if args.weak else []
    raws = [raw_train, raw_dev] + ([raw_weak] if raw_weak else [])
    if args.test:
        raw_test = io.read_conll_raw(args.test)
        raws.append(raw_test)
    tags = io.infer_tagset(*raws)
    strong_train = [StrongExample(s, y, tags) for s, y in io.raw_to_ids(raw_train, tags)]
    strong_dev = [StrongExample(s, y, tags) for s, y in io.raw_to_ids(raw_dev, tags)]
    weak = [WeakExample(s, y, tags) for s, y in io.raw_to_ids(raw_weak, tags)] if raw_weak else []
    strong_test = (
        [StrongExample(s, y, tags) for s, y in io.raw_to_ids(raw_test, tags)] if args.test else None
    )
    result = run_pipeline(strong_train, strong_dev, weak, cfg, strong_test=strong_test)
    io.save_model(result.model, args.out, _provenance(cfg, "pipeline", "final"))
    io.write_json(result.report.to_json_dict(), args.report)
    last = result.report.stages[-1]
    f1 = last.dev_metrics.span_f1 if last.dev_metrics else float("nan")
    print(f"pipeline done ({len(result.report.stages)} stages), final dev span F1 {f1:.4f} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus and gazetteers")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("weaklabel", help="annotate sentences with gazetteer weak labels")
    p.add_argument("--gazetteer", required=True)
    p.add_argument("--input", required=True, help="CoNLL file; existing labels are ignored")
    p.add_argument("--out", required=True)
    p.add_argument("--keep-unmatched", action="store_true",
                   help="keep sentences with no dictionary hit (default: drop them)")
    p.add_argument("--case-sensitive", action="store_true")
    p.set_defaults(func=_cmd_weaklabel)

    p = sub.add_parser("train", help="supervised CRF training")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("complete", help="fill O weak labels with model predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--weak", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write completion statistics JSON here")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_complete)

    p = sub.add_parser("calibrate", help="fit the histogram-binning confidence table")
    p.add_argument("--model", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("train-na", help="noise-aware training on strong + corrected weak data")
    p.add_argument("--model", required=True, help="initial model (also scores the weak sentences)")
    p.add_argument("--strong", required=True)
    p.add_argument("--weak-raw", required=True)
    p.add_argument("--corrected", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train_na)

    p = sub.add_parser("finetune", help="continue training a model on strong data")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("baseline", help="train a naive weak-supervision baseline")
    p.add_argument("--mode", required=True, choices=["wsl", "weighted", "partial", "sst"])
    p.add_argument("--strong", required=True)
    p.add_argument("--weak")
    p.add_argument("--unlabeled")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("eval", help="span metrics for a model or a prediction file")
    p.add_argument("--model")
    p.add_argument("--pred")
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", help="per-type span counts for one or more label sources")
    p.add_argument("--source", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("pipeline", help="run the full staged recipe end to end")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--weak")
    p.add_argument("--test")
    p.add_argument("--out", required=True, help="final model file")
    p.add_argument("--report", required=True, help="stage report JSON")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
