import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqlab.completion import (
    complete,
    complete_dataset,
    find_bio_mismatches,
    matched_fraction,
)
from seqlab.core import StrongExample, TagSet, WeakExample, is_bio_valid
from seqlab.model import decode
from seqlab.training import TrainConfig, train_supervised

TAGS = TagSet(("color", "productType"))
B_COLOR, I_COLOR = TAGS.b_label("color"), TAGS.i_label("color")
B_PROD, I_PROD = TAGS.b_label("productType"), TAGS.i_label("productType")


class TestComplete:
    def test_keeps_weak_fills_o(self):
        """A kept B followed by predicted I of another type: exactly the
        documented mismatch pattern."""
        weak = (B_PROD, 0, 0)
        predicted = (B_COLOR, I_COLOR, 0)
        assert complete(weak, predicted) == (B_PROD, I_COLOR, 0)

    def test_all_o_weak_returns_prediction(self):
        pred = (B_COLOR, I_COLOR, 0)
        assert complete((0, 0, 0), pred) == pred

    def test_no_o_weak_returns_weak(self):
        weak = (B_COLOR, I_COLOR, B_PROD)
        assert complete(weak, (0, 0, 0)) == weak

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            complete((0, 0), (0,))

    @given(
        st.lists(
            st.tuples(st.integers(0, TAGS.num_labels - 1), st.integers(0, TAGS.num_labels - 1)),
            min_size=1,
            max_size=12,
        )
    )
    def test_never_overwrites_non_o(self, pairs):
        weak = tuple(w for w, _ in pairs)
        pred = tuple(p for _, p in pairs)
        corrected = complete(weak, pred)
        for w, c, p in zip(weak, corrected, pred):
            if w != 0:
                assert c == w
            else:
                assert c == p
        # non-O multiset grows, never shrinks
        assert sum(1 for c in corrected if c != 0) >= sum(1 for w in weak if w != 0)
        assert matched_fraction(corrected) >= matched_fraction(weak)

    def test_identity_cases(self):
        weak = (B_COLOR, 0, I_COLOR)
        assert complete(weak, weak) == weak


class TestMatchedFraction:
    def test_half(self):
        assert matched_fraction((B_COLOR, I_COLOR, 0, 0)) == 0.5

    def test_all_o(self):
        assert matched_fraction((0, 0, 0)) == 0.0

    def test_no_o(self):
        assert matched_fraction((B_COLOR, I_COLOR)) == 1.0


class TestFindBioMismatches:
    def test_documented_pattern(self):
        assert find_bio_mismatches((B_PROD, I_COLOR, 0), TAGS) == [1]

    def test_valid_sequence_empty(self):
        assert find_bio_mismatches((B_COLOR, I_COLOR, 0, B_PROD), TAGS) == []

    def test_initial_inside(self):
        assert find_bio_mismatches((I_COLOR, 0), TAGS) == [0]

    @given(st.lists(st.integers(0, TAGS.num_labels - 1), min_size=1, max_size=10))
    def test_empty_iff_valid(self, labels):
        labels = tuple(labels)
        assert (find_bio_mismatches(labels, TAGS) == []) == is_bio_valid(labels, TAGS)


def _toy_model():
    """A model that reliably predicts B-color for the token 'red7'."""
    data = [
        StrongExample(("the", "red7", "hat3"), (0, B_COLOR, B_PROD), TAGS),
        StrongExample(("red7", "hat3"), (B_COLOR, B_PROD), TAGS),
    ]
    cfg = TrainConfig(seed=1, hash_dim=1 << 12, batch_size=1)
    m, _ = train_supervised(data, cfg, epochs=60)
    return m


class TestCompleteDataset:
    def test_fills_predictions_and_corrected(self):
        m = _toy_model()
        weak = [WeakExample(("the", "red7", "hat3"), (0, 0, B_PROD), TAGS)]
        out, stats = complete_dataset(weak, m)
        ex = out[0]
        assert ex.predicted == decode(m, ex.sentence)[0]
        assert ex.corrected == complete(ex.weak, ex.predicted)
        assert ex.corrected[1] == B_COLOR  # the model's knowledge filled in
        assert stats.sentences == 1

    def test_agreeing_model_no_mismatches(self):
        m = _toy_model()
        sent = ("the", "red7", "hat3")
        weak = [WeakExample(sent, decode(m, sent)[0], TAGS)]
        out, stats = complete_dataset(weak, m)
        assert out[0].corrected == out[0].weak
        assert stats.mismatched_sentences == 0

    def test_drop_flag_keeps_only_valid(self):
        m = _toy_model()
        # force a mismatch: weak pins B-productType right before a token the
        # model will continue as I-color; build it synthetically instead of
        # relying on training, by checking both drop settings agree
        weak = [
            WeakExample(("the", "red7", "hat3"), (0, 0, B_PROD), TAGS),
            WeakExample(("red7", "hat3"), (0, B_PROD), TAGS),
        ]
        kept, stats = complete_dataset(weak, m, drop_mismatches=True)
        assert stats.dropped_sentences == stats.mismatched_sentences
        for ex in kept:
            assert is_bio_valid(ex.corrected, TAGS)

    def test_output_order_follows_input(self):
        m = _toy_model()
        weak = [
            WeakExample(("red7",), (0,), TAGS),
            WeakExample(("hat3",), (0,), TAGS),
            WeakExample(("the",), (0,), TAGS),
        ]
        out, _ = complete_dataset(weak, m)
        assert [ex.sentence for ex in out] == [ex.sentence for ex in weak]

    def test_kept_begin_with_predicted_inside_counts_as_mismatch(self):
        """A kept B of one type followed by a predicted I of another is the
        canonical completion mismatch and must be counted."""
        data = [
            StrongExample(("sky2", "blue4"), (B_COLOR, I_COLOR), TAGS),
            StrongExample(("the", "sky2", "blue4"), (0, B_COLOR, I_COLOR), TAGS),
        ]
        m, _ = train_supervised(data, TrainConfig(seed=0, hash_dim=1 << 12, batch_size=1), epochs=80)
        assert decode(m, ("sky2", "blue4"))[0] == (B_COLOR, I_COLOR)
        weak = [WeakExample(("sky2", "blue4"), (B_PROD, 0), TAGS)]
        out, stats = complete_dataset(weak, m)
        assert out[0].corrected == (B_PROD, I_COLOR)
        assert stats.mismatched_sentences == 1
