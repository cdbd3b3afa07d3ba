import collections
from pathlib import Path

import pytest

from seqlab.core import is_bio_valid
from seqlab.gazetteer import annotate_many, compile_matcher, weak_label_quality
from seqlab.io import load_config
from seqlab.synth import (
    SynthSpec,
    build_templates,
    degrade,
    generate,
    reference_spec,
    spec_from_config,
)


def small_spec(seed=0, **overrides):
    types = ("alpha", "beta", "gamma")
    templates, strong_templates = build_templates(types, ("find", "the", "best", "new", "buy"), 6, 2, seed)
    kwargs = dict(
        entity_types=types,
        unigrams_per_type=20,
        bigrams_per_type=5,
        templates=templates,
        strong_templates=strong_templates,
        strong_train=50,
        strong_dev=50,
        strong_test=50,
        weak_pool=200,
        seed=seed,
        rho=0.5,
        beta=0.1,
    )
    kwargs.update(overrides)
    return SynthSpec(**kwargs)


class TestSpec:
    def test_validates_rates(self):
        with pytest.raises(ValueError):
            small_spec(rho=1.5)
        with pytest.raises(ValueError):
            small_spec(beta=-0.1)

    def test_reference_matches_shipped_config(self):
        cfg = load_config(Path(__file__).resolve().parent.parent / "configs" / "reference.cfg")
        assert spec_from_config(cfg) == reference_spec(0)

    def test_strong_templates_subset(self):
        spec = reference_spec(0)
        assert set(spec.strong_templates) < set(spec.templates)

    def test_empty_templates_with_sizes_rejected(self):
        spec = small_spec()
        object.__setattr__(spec, "templates", tuple())
        object.__setattr__(spec, "strong_templates", tuple())
        with pytest.raises(ValueError, match="template pool"):
            generate(spec)


class TestGenerate:
    def test_deterministic(self):
        c1, c2 = generate(small_spec(7)), generate(small_spec(7))
        assert [ex.sentence for ex in c1.train] == [ex.sentence for ex in c2.train]
        assert [ex.gold for ex in c1.weak_gold] == [ex.gold for ex in c2.weak_gold]
        assert c1.gazetteer.entries == c2.gazetteer.entries

    def test_seed_changes_corpus(self):
        c1, c2 = generate(small_spec(1)), generate(small_spec(2))
        assert [ex.sentence for ex in c1.train] != [ex.sentence for ex in c2.train]

    def test_gold_is_bio_valid(self):
        corpus = generate(small_spec(3))
        for split in (corpus.train, corpus.dev, corpus.test, corpus.weak_gold):
            for ex in split:
                assert is_bio_valid(ex.gold, corpus.tags)

    def test_sizes(self):
        corpus = generate(small_spec(4))
        assert (len(corpus.train), len(corpus.dev), len(corpus.test), len(corpus.weak_gold)) == (
            50, 50, 50, 200,
        )

    def test_span_type_distribution_matches_slot_frequencies(self):
        spec = small_spec(5, weak_pool=12000)
        corpus = generate(spec)
        slot_counts = collections.Counter()
        for template in spec.templates:
            for item in template:
                if item.startswith("<") and item.endswith(">"):
                    slot_counts[item[1:-1]] += 1
        total_slots = sum(slot_counts.values())
        span_counts = collections.Counter()
        for ex in corpus.weak_gold:
            for lab in ex.gold:
                if corpus.tags.is_begin(lab):
                    span_counts[corpus.tags.type_of(lab)] += 1
        total_spans = sum(span_counts.values())
        for t in spec.entity_types:
            assert abs(span_counts[t] / total_spans - slot_counts[t] / total_slots) < 0.02

    def test_undegraded_gazetteer_recovers_gold_exactly(self):
        corpus = generate(small_spec(6))
        matcher = compile_matcher(corpus.gazetteer, corpus.tags)
        sentences = [ex.sentence for ex in corpus.weak_gold]
        weak = annotate_many(matcher, sentences)
        p, r = weak_label_quality(weak, [ex.gold for ex in corpus.weak_gold], corpus.tags)
        assert p == 1.0 and r == 1.0


class TestDegrade:
    def test_identity(self):
        corpus = generate(small_spec(8))
        assert degrade(corpus.gazetteer, 1.0, 0.0, seed=0).entries == corpus.gazetteer.entries

    def test_empty(self):
        corpus = generate(small_spec(9))
        assert len(degrade(corpus.gazetteer, 0.0, 0.0, seed=0)) == 0

    def test_deterministic(self):
        corpus = generate(small_spec(10))
        g1 = degrade(corpus.gazetteer, 0.5, 0.2, seed=11)
        g2 = degrade(corpus.gazetteer, 0.5, 0.2, seed=11)
        assert g1.entries == g2.entries

    def test_subset_of_surfaces_possibly_retyped(self):
        corpus = generate(small_spec(12))
        out = degrade(corpus.gazetteer, 0.6, 0.3, seed=13)
        original = dict(corpus.gazetteer.entries)
        types = set(corpus.tags.entity_types)
        retyped = 0
        for surface, t in out.entries:
            assert surface in original
            assert t in types
            retyped += t != original[surface]
        assert 0 < len(out) < len(corpus.gazetteer)
        assert retyped > 0

    def test_expected_size(self):
        spec = reference_spec(0)
        corpus = generate(spec)
        n = len(corpus.gazetteer)
        kept = len(degrade(corpus.gazetteer, 0.5, 0.0, seed=1))
        # binomial(600+, 0.5): allow 4 sigma
        sigma = (0.25 * n) ** 0.5
        assert abs(kept - 0.5 * n) < 4 * sigma

    def test_rejects_bad_rates(self):
        corpus = generate(small_spec(14))
        with pytest.raises(ValueError):
            degrade(corpus.gazetteer, 1.1, 0.0, seed=0)


class TestReferenceRegime:
    def test_weak_label_quality_bands(self):
        """The shipped benchmark lands in the incomplete/biased dictionary
        regime: recall near the coverage rate, precision dented by retyping
        and partial matches."""
        spec = reference_spec(0)
        corpus = generate(spec)
        gaz = degrade(corpus.gazetteer, spec.rho, spec.beta, spec.seed)
        matcher = compile_matcher(gaz, corpus.tags)
        weak = annotate_many(matcher, [ex.sentence for ex in corpus.weak_gold])
        p, r = weak_label_quality(weak, [ex.gold for ex in corpus.weak_gold], corpus.tags)
        assert 0.80 <= p <= 0.90
        assert 0.45 <= r <= 0.55
