import math

import numpy as np
import pytest

from seqlab import crf
from seqlab.core import TagSet, bio_start_mask, bio_transition_mask, is_bio_valid
from seqlab.crf import TransitionTable

from oracles import (
    brute_log_partition,
    brute_marginals,
    brute_nll,
    brute_viterbi,
    path_score,
    random_instance,
)


def bio_table(tags, rng=None, scale=1.0):
    L = tags.num_labels
    if rng is None:
        return TransitionTable.zeros(L, tags)
    return TransitionTable(
        scale * rng.normal(size=(L, L)),
        scale * rng.normal(size=L),
        scale * rng.normal(size=L),
        bio_transition_mask(tags),
        bio_start_mask(tags),
    )


class TestSequenceScore:
    def test_all_zero(self):
        tr = TransitionTable.zeros(3)
        assert crf.sequence_score(np.zeros((4, 3)), tr, [0, 1, 2, 0]) == 0.0

    def test_single_token(self):
        tr = TransitionTable.zeros(2)
        assert crf.sequence_score(np.array([[1.0, 2.0]]), tr, [1]) == 2.0

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            em, tr = random_instance(rng, int(rng.integers(1, 6)), 3)
            y = rng.integers(0, 3, size=em.shape[0])
            assert crf.sequence_score(em, tr, y) == pytest.approx(path_score(em, tr, y), abs=1e-12)

    def test_dimension_mismatch(self):
        tr = TransitionTable.zeros(3)
        with pytest.raises(ValueError):
            crf.sequence_score(np.zeros((2, 3)), tr, [0])
        with pytest.raises(ValueError):
            crf.sequence_score(np.zeros((2, 2)), tr, [0, 0])


class TestLogPartition:
    def test_uniform_two_by_two(self):
        assert crf.log_partition(np.zeros((2, 2)), TransitionTable.zeros(2)) == pytest.approx(math.log(4))

    def test_uniform_general(self):
        for n, L in [(1, 2), (3, 4), (5, 3)]:
            got = crf.log_partition(np.zeros((n, L)), TransitionTable.zeros(L))
            assert got == pytest.approx(n * math.log(L), abs=1e-10)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n, L = int(rng.integers(1, 7)), int(rng.integers(2, 5))
            em, tr = random_instance(rng, n, L)
            assert crf.log_partition(em, tr) == pytest.approx(brute_log_partition(em, tr), abs=1e-8)


class TestNll:
    def test_uniform(self):
        tr = TransitionTable.zeros(2)
        assert crf.nll(np.zeros((2, 2)), tr, [0, 1]) == pytest.approx(math.log(4))

    def test_viterbi_path_is_best(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            em, tr = random_instance(rng, 4, 3)
            best, _ = crf.viterbi(em, tr, constrained=False)
            best_nll = crf.nll(em, tr, best)
            for _ in range(10):
                other = tuple(rng.integers(0, 3, size=4))
                assert best_nll <= crf.nll(em, tr, other) + 1e-12

    def test_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(15):
            em, tr = random_instance(rng, int(rng.integers(1, 6)), 3)
            y = tuple(rng.integers(0, 3, size=em.shape[0]))
            assert crf.nll(em, tr, y) == pytest.approx(brute_nll(em, tr, y), abs=1e-8)

    def test_nonnegative_and_probability_in_unit_interval(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            em, tr = random_instance(rng, int(rng.integers(1, 6)), 4, scale=2.0)
            y = tuple(rng.integers(0, 4, size=em.shape[0]))
            loss = crf.nll(em, tr, y)
            assert loss >= 0.0
            assert 0.0 < math.exp(-loss) <= 1.0

    def test_masked_path_raises(self):
        tags = TagSet(("x",))
        tr = bio_table(tags)
        em = np.zeros((2, 3))
        bad = (0, tags.i_label("x"))  # O -> I-x
        with pytest.raises(ValueError, match="masked"):
            crf.nll(em, tr, bad, constrained=True)
        # unmasked scoring of the same path is finite
        assert math.isfinite(crf.nll(em, tr, bad, constrained=False))


class TestLogUnlikelihood:
    def _instance_with_prob(self, p):
        # single token, two labels; P(y=[0]) = p by construction
        em = np.array([[math.log(p), math.log(1 - p)]])
        return em, TransitionTable.zeros(2)

    def test_p_02(self):
        em, tr = self._instance_with_prob(0.2)
        assert crf.log_unlikelihood(em, tr, [0]) == pytest.approx(-math.log(0.8), abs=1e-10)

    def test_p_05(self):
        em, tr = self._instance_with_prob(0.5)
        assert crf.log_unlikelihood(em, tr, [0]) == pytest.approx(-math.log(0.5), abs=1e-10)

    def test_clamp_near_certainty(self):
        em = np.array([[0.0, -60.0]])
        tr = TransitionTable.zeros(2)
        got = crf.log_unlikelihood(em, tr, [0])
        assert got == pytest.approx(-math.log(1e-6), rel=1e-6)
        assert math.isfinite(got)


class TestViterbi:
    def test_obvious_argmax(self):
        em = np.array([[0.0, 5.0], [0.0, 5.0]])
        y, s = crf.viterbi(em, TransitionTable.zeros(2), constrained=False)
        assert y == (1, 1) and s == 10.0

    def test_tie_break_all_zero(self):
        y, s = crf.viterbi(np.zeros((4, 3)), TransitionTable.zeros(3), constrained=False)
        assert y == (0, 0, 0, 0) and s == 0.0

    def test_matches_enumeration(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            n, L = int(rng.integers(1, 7)), int(rng.integers(2, 5))
            em, tr = random_instance(rng, n, L)
            got_y, got_s = crf.viterbi(em, tr, constrained=False)
            exp_y, exp_s = brute_viterbi(em, tr)
            assert got_y == exp_y
            assert got_s == pytest.approx(exp_s, abs=1e-8)

    def test_score_equals_sequence_score_exactly(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            em, tr = random_instance(rng, 5, 4)
            y, s = crf.viterbi(em, tr, constrained=False)
            assert s == crf.sequence_score(em, tr, y)

    def test_constrained_decode_is_bio_valid(self):
        tags = TagSet(("a", "b"))
        rng = np.random.default_rng(19)
        for _ in range(30):
            em = rng.normal(size=(int(rng.integers(1, 7)), tags.num_labels)) * 3
            tr = bio_table(tags, rng)
            y, _ = crf.viterbi(em, tr)
            assert is_bio_valid(y, tags)

    def test_constrained_matches_filtered_enumeration(self):
        tags = TagSet(("a",))
        rng = np.random.default_rng(23)
        for _ in range(15):
            em = rng.normal(size=(int(rng.integers(1, 6)), 3)) * 2
            tr = bio_table(tags, rng)
            got_y, got_s = crf.viterbi(em, tr)
            exp_y, exp_s = brute_viterbi(em, tr, constrained=True)
            assert got_y == exp_y
            assert got_s == pytest.approx(exp_s, abs=1e-8)


class TestMarginals:
    def test_uniform(self):
        token, pair = crf.marginals(np.zeros((3, 4)), TransitionTable.zeros(4))
        assert np.allclose(token, 0.25)
        assert np.allclose(pair, 1 / 16)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            em, tr = random_instance(rng, int(rng.integers(1, 7)), 4, scale=2.0)
            token, pair = crf.marginals(em, tr)
            assert np.allclose(token.sum(axis=1), 1.0, atol=1e-8)
            if pair.shape[0]:
                assert np.allclose(pair.sum(axis=(1, 2)), 1.0, atol=1e-8)

    def test_pairwise_consistent_with_token(self):
        rng = np.random.default_rng(31)
        em, tr = random_instance(rng, 5, 3)
        token, pair = crf.marginals(em, tr)
        for i in range(4):
            assert np.allclose(pair[i].sum(axis=1), token[i], atol=1e-8)
            assert np.allclose(pair[i].sum(axis=0), token[i + 1], atol=1e-8)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(37)
        for _ in range(10):
            n, L = int(rng.integers(1, 6)), 3
            em, tr = random_instance(rng, n, L)
            token, pair = crf.marginals(em, tr)
            exp_token, exp_pair = brute_marginals(em, tr)
            assert np.allclose(token, exp_token, atol=1e-8)
            assert np.allclose(pair, exp_pair, atol=1e-8)


class TestConstrainedLogPartition:
    def test_all_true_equals_log_partition(self):
        rng = np.random.default_rng(41)
        em, tr = random_instance(rng, 4, 3)
        allowed = np.ones((4, 3), dtype=bool)
        assert crf.constrained_log_partition(em, tr, allowed) == pytest.approx(
            crf.log_partition(em, tr), abs=1e-10
        )

    def test_pinned_path_equals_its_score(self):
        rng = np.random.default_rng(43)
        em, tr = random_instance(rng, 5, 3)
        y = tuple(rng.integers(0, 3, size=5))
        allowed = np.zeros((5, 3), dtype=bool)
        for i, lab in enumerate(y):
            allowed[i, lab] = True
        assert crf.constrained_log_partition(em, tr, allowed) == pytest.approx(
            crf.sequence_score(em, tr, y), abs=1e-10
        )

    def test_matches_masked_enumeration(self):
        rng = np.random.default_rng(47)
        for _ in range(15):
            n, L = int(rng.integers(1, 6)), 3
            em, tr = random_instance(rng, n, L)
            allowed = rng.random((n, L)) < 0.6
            allowed[np.arange(n), rng.integers(0, L, size=n)] = True  # keep feasible
            got = crf.constrained_log_partition(em, tr, allowed)
            exp = brute_log_partition(em, tr, token_mask=allowed)
            assert got == pytest.approx(exp, abs=1e-8)

    def test_empty_allowed_set_raises(self):
        em, tr = random_instance(np.random.default_rng(0), 3, 3)
        allowed = np.ones((3, 3), dtype=bool)
        allowed[1] = False
        with pytest.raises(ValueError, match="allowed"):
            crf.constrained_log_partition(em, tr, allowed)


class TestInvariances:
    def test_emission_shift(self):
        rng = np.random.default_rng(53)
        em, tr = random_instance(rng, 5, 3)
        y = tuple(rng.integers(0, 3, size=5))
        c = 1.7
        shifted = em.copy()
        shifted[2] += c
        assert crf.log_partition(shifted, tr) == pytest.approx(crf.log_partition(em, tr) + c, abs=1e-8)
        assert crf.sequence_score(shifted, tr, y) == pytest.approx(
            crf.sequence_score(em, tr, y) + c, abs=1e-8
        )
        assert crf.nll(shifted, tr, y) == pytest.approx(crf.nll(em, tr, y), abs=1e-8)
        assert crf.viterbi(shifted, tr, constrained=False)[0] == crf.viterbi(em, tr, constrained=False)[0]
        t0, _ = crf.marginals(em, tr)
        t1, _ = crf.marginals(shifted, tr)
        assert np.allclose(t0, t1, atol=1e-8)

    def test_path_posteriors_sum_to_one(self):
        rng = np.random.default_rng(59)
        em, tr = random_instance(rng, 4, 3)
        log_z = crf.log_partition(em, tr)
        total = 0.0
        import itertools

        for path in itertools.product(range(3), repeat=4):
            total += math.exp(crf.sequence_score(em, tr, path) - log_z)
        assert total == pytest.approx(1.0, abs=1e-8)


def finite_difference(loss_fn, em, tr, h=1e-5):
    """Central differences over every lattice parameter."""
    d_em = np.zeros_like(em)
    for idx in np.ndindex(em.shape):
        e = em.copy(); e[idx] += h; up = loss_fn(e, tr)
        e = em.copy(); e[idx] -= h; down = loss_fn(e, tr)
        d_em[idx] = (up - down) / (2 * h)

    def perturb(name, idx, delta):
        t2 = tr.copy()
        getattr(t2, name)[idx] += delta
        return t2

    blocks = {}
    for name in ("trans", "start", "stop"):
        arr = getattr(tr, name)
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            g[idx] = (loss_fn(em, perturb(name, idx, h)) - loss_fn(em, perturb(name, idx, -h))) / (2 * h)
        blocks[name] = g
    return d_em, blocks["trans"], blocks["start"], blocks["stop"]


def assert_grads_close(analytic, numeric, tol=1e-4):
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric))
    assert err.max() <= tol


class TestGradients:
    def test_nll_uniform_emission_entry(self):
        L = 4
        em = np.zeros((3, L))
        tr = TransitionTable.zeros(L)
        y = (1, 2, 0)
        _, g = crf.nll_and_grad(em, tr, y)
        assert g.d_em[0, 1] == pytest.approx(1 / L - 1, abs=1e-10)
        assert np.allclose(g.d_em.sum(axis=1), 0.0, atol=1e-10)

    @pytest.mark.parametrize("n,L", [(2, 2), (4, 3), (5, 3)])
    def test_nll_matches_fd(self, n, L):
        rng = np.random.default_rng(1000 + n * 10 + L)
        em, tr = random_instance(rng, n, L)
        y = tuple(rng.integers(0, L, size=n))
        loss, g = crf.nll_and_grad(em, tr, y)
        assert loss == pytest.approx(crf.nll(em, tr, y), abs=1e-12)
        fd = finite_difference(lambda e, t: crf.nll(e, t, y), em, tr)
        for a, b in zip((g.d_em, g.d_trans, g.d_start, g.d_stop), fd):
            assert_grads_close(a, b)

    @pytest.mark.parametrize("n,L", [(3, 2), (4, 3)])
    def test_unlikelihood_matches_fd(self, n, L):
        rng = np.random.default_rng(2000 + n * 10 + L)
        em, tr = random_instance(rng, n, L)
        y = tuple(rng.integers(0, L, size=n))
        loss, g = crf.unlikelihood_and_grad(em, tr, y)
        assert loss == pytest.approx(crf.log_unlikelihood(em, tr, y), abs=1e-12)
        fd = finite_difference(lambda e, t: crf.log_unlikelihood(e, t, y), em, tr)
        for a, b in zip((g.d_em, g.d_trans, g.d_start, g.d_stop), fd):
            assert_grads_close(a, b)

    @pytest.mark.parametrize("conf", [0.0, 0.3, 1.0])
    def test_noise_aware_matches_fd(self, conf):
        rng = np.random.default_rng(int(conf * 100) + 3)
        em, tr = random_instance(rng, 4, 3)
        y = tuple(rng.integers(0, 3, size=4))
        loss, g = crf.noise_aware_loss_and_grad(em, tr, y, conf)

        def na_loss(e, t):
            return conf * crf.nll(e, t, y) + (1 - conf) * crf.log_unlikelihood(e, t, y)

        assert loss == pytest.approx(na_loss(em, tr), abs=1e-12)
        fd = finite_difference(na_loss, em, tr)
        for a, b in zip((g.d_em, g.d_trans, g.d_start, g.d_stop), fd):
            assert_grads_close(a, b)

    def test_partial_matches_fd(self):
        rng = np.random.default_rng(77)
        em, tr = random_instance(rng, 4, 3)
        allowed = rng.random((4, 3)) < 0.5
        allowed[np.arange(4), rng.integers(0, 3, size=4)] = True
        loss, g = crf.partial_nll_and_grad(em, tr, allowed)
        assert loss >= -1e-12

        def partial_loss(e, t):
            return crf.log_partition(e, t) - crf.constrained_log_partition(e, t, allowed)

        fd = finite_difference(partial_loss, em, tr)
        for a, b in zip((g.d_em, g.d_trans, g.d_start, g.d_stop), fd):
            assert_grads_close(a, b)
