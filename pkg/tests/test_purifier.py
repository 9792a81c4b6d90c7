import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from providers import BrokenProvider, FixedScoreProvider
from webly.errors import (DimensionMismatch, EmptySurvivorSet, InsufficientNegatives,
                          ProviderFailure)
from webly.purifier import (LN2, BackgroundStats, ClassScorePair, LogisticScoreProvider, SplitMix64,
                            background_stats, elda_rank, elda_scores, elda_select, make_provider,
                            progressive_prune, removal_probability, stream_seed,
                            train_exemplar_lda, train_exemplar_ldas)
from webly.records import ImageRecord
from webly.vision import extract_hog
from webly.fixtures import pattern_images


def records(X, prefix="v"):
    return [ImageRecord(f"{prefix}#{i + 1}", prefix, i + 1, features=np.asarray(x, float))
            for i, x in enumerate(X)]


def scored(values):
    """Records whose fixed provider score s1 is ``values[i]``."""
    return records([[v, 0.0] for v in values])


class TestBackground:
    def test_covariance_matches_two_pass(self, rng):
        X = rng.normal(0, 1, (30, 6))
        stats = background_stats(X, reg=0.0, floor=0.0)
        mu = [sum(X[:, j]) / len(X) for j in range(6)]
        ref = np.array([[sum((X[k, a] - mu[a]) * (X[k, b] - mu[b]) for k in range(len(X))) / (len(X) - 1)
                         for b in range(6)] for a in range(6)])
        np.testing.assert_allclose(stats.cov, ref, atol=1e-10)
        np.testing.assert_allclose(stats.mean, mu, atol=1e-12)

    def test_identical_negatives_give_floor_ridge(self):
        stats = background_stats(np.ones((5, 4)))
        np.testing.assert_allclose(stats.cov, 1e-6 * np.eye(4))

    def test_needs_two(self):
        with pytest.raises(InsufficientNegatives):
            background_stats(np.ones((1, 4)))


class TestExemplarLda:
    def test_identity_whitening(self, rng):
        x = rng.normal(0, 1, 5)
        stats = BackgroundStats(np.zeros(5), np.eye(5))
        np.testing.assert_allclose(train_exemplar_lda(x, stats).weights, x, atol=1e-12)

    def test_solves_system(self, rng):
        stats = background_stats(rng.normal(0, 1, (40, 8)))
        x = rng.normal(0, 1, 8)
        w = train_exemplar_lda(x, stats).weights
        np.testing.assert_allclose(stats.cov @ w, x - stats.mean, atol=1e-8)
        batch = train_exemplar_ldas(x[None], stats, ["a"])[0].weights
        np.testing.assert_allclose(batch, w, atol=1e-10)

    def test_dim_mismatch(self, rng):
        stats = background_stats(rng.normal(0, 1, (4, 3)))
        with pytest.raises(DimensionMismatch):
            train_exemplar_lda(np.ones(4), stats)

    def test_identity_ordering_matches_brute_force(self, rng):
        X = rng.normal(0, 1, (30, 6))
        recs = records(X)
        stats = BackgroundStats(np.zeros(6), np.eye(6))
        dets = train_exemplar_ldas(X, stats, [r.image_id for r in recs])
        ref = []
        for j in range(30):
            resp = sorted((X[i] @ X[j] for i in range(30) if i != j), reverse=True)
            ref.append(sum(resp[:5]) / 5)
        order, scores = elda_rank(recs, dets)
        np.testing.assert_allclose(scores, ref, atol=1e-12)
        assert order == sorted(range(30), key=lambda j: (-ref[j], j))

    def test_ties_keep_input_order(self):
        recs = records(np.ones((4, 2)))
        stats = BackgroundStats(np.zeros(2), np.eye(2))
        dets = train_exemplar_ldas(np.ones((4, 2)), stats, [r.image_id for r in recs])
        assert elda_rank(recs, dets)[0] == [0, 1, 2, 3]

    def test_outliers_fall_below_top_100(self):
        imgs = pattern_images("grating0", 120, seed=4, outliers=10)
        feats = np.array([extract_hog(im) for im in imgs])
        neg = np.array([extract_hog(im) for im in pattern_images("blobs", 50, seed=5)])
        recs = records(feats)
        dets = train_exemplar_ldas(feats, background_stats(neg), [r.image_id for r in recs])
        kept = elda_select(recs, dets, keep=100)
        assert len(kept) == 100
        assert not {r.image_id for r in kept} & {r.image_id for r in recs[110:]}

    def test_empty(self):
        assert elda_scores([], []).shape == (0,)


class TestRemovalProbability:
    def test_known_values(self):
        mpmath.mp.dps = 40
        want = float(2 - mpmath.e ** mpmath.mpf("0.2"))
        assert removal_probability((0.6, 0.4)) == pytest.approx(want, abs=1e-15)
        assert want == pytest.approx(0.7785972418398302, abs=1e-16)
        assert removal_probability((0.5, 0.5)) == 1.0
        assert removal_probability((1.0, 0.0)) == 0.0

    def test_exact_zero_at_ln2(self):
        assert removal_probability((0.5 + LN2 / 2, 0.5 - LN2 / 2)) == 0.0
        assert removal_probability(ClassScorePair(0.85, 0.15)) == 0.0

    def test_monotone_grid(self):
        gaps = np.linspace(0, 1, 1000)
        p = [removal_probability(((1 + g) / 2, (1 - g) / 2)) for g in gaps]
        assert all(a >= b for a, b in zip(p, p[1:]))
        assert all(0.0 <= x <= 1.0 for x in p)

    @given(st.floats(0, 1))
    def test_symmetric(self, s):
        assert removal_probability((s, 1 - s)) == removal_probability((1 - s, s))

    @pytest.mark.parametrize("pair", [(0.7, 0.4), (-0.1, 1.1), (1.2, -0.2)])
    def test_pair_validation(self, pair):
        with pytest.raises(ValueError):
            ClassScorePair(*pair)


class TestSplitMix:
    def test_reference_vector(self):
        # first outputs for seed 0 from the published reference implementation
        g = SplitMix64(0)
        assert [g.next_u64() for _ in range(3)] == [
            0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    @given(st.integers(0, 2**64 - 1))
    def test_unit_interval(self, seed):
        g = SplitMix64(seed)
        assert all(0.0 <= g.random() < 1.0 for _ in range(10))

    def test_stream_depends_on_variation(self):
        assert stream_seed(0, "jumping horse") != stream_seed(0, "rearing horse")


class TestProgressivePrune:
    def test_confident_scores_remove_nothing(self):
        kept, trace = progressive_prune(scored([1.0] * 10), FixedScoreProvider(), np.zeros((2, 2)), 0)
        assert len(kept) == 10 and trace.stop_reason == "converged"
        assert len(trace.rounds) == 1

    def test_all_ambiguous_empties(self):
        with pytest.raises(EmptySurvivorSet) as exc:
            progressive_prune(scored([0.5] * 10), FixedScoreProvider(), np.zeros((2, 2)), 0, "v")
        assert exc.value.trace.stop_reason == "empty-survivor-set"
        assert len(exc.value.trace.rounds) == 1

    def test_empty_input(self):
        with pytest.raises(EmptySurvivorSet):
            progressive_prune([], FixedScoreProvider(), np.zeros((2, 2)), 0)

    def test_trace_records_draws(self):
        kept, trace = progressive_prune(scored([1.0] * 50 + [0.55] * 50), FixedScoreProvider(),
                                        np.zeros((2, 2)), 3, "v", max_rounds=3)
        for r in trace.rounds:
            assert len(r.input_ids) == len(r.draws) == len(r.probabilities)
            assert len(r.kept_ids) + len(r.removed_ids) == len(r.input_ids)
            for i, p, u in zip(r.input_ids, r.probabilities, r.draws):
                assert (i in r.removed_ids) == (u < p)
        removed = {rec["image_id"] for rec in trace.removal_records()}
        assert removed | {k.image_id for k in kept} == {f"v#{i}" for i in range(1, 101)}
        assert removed <= {f"v#{i}" for i in range(51, 101)}

    def test_max_rounds(self):
        # each round removes about 90% of the ambiguous half, never under 1%
        _, trace = progressive_prune(scored([1.0] * 10 + [0.52] * 990), FixedScoreProvider(),
                                     np.zeros((2, 2)), 0, max_rounds=2)
        assert trace.stop_reason == "max-rounds" and len(trace.rounds) == 2

    def test_deterministic(self):
        run = lambda: progressive_prune(scored(np.linspace(0.5, 1, 40)), FixedScoreProvider(),
                                        np.zeros((2, 2)), 11, "v")[1].to_jsonl()
        assert run() == run()

    def test_seed_changes_outcome(self):
        run = lambda s: progressive_prune(scored([0.6] * 40 + [1.0]), FixedScoreProvider(),
                                          np.zeros((2, 2)), s, "v")[1].to_jsonl()
        assert run(1) != run(2)

    def test_monte_carlo_matches_analytic(self):
        values = [0.5 + g / 2 for g in (0.0, 0.1, 0.2, 0.3, 0.5, 0.6, 0.69)] + [1.0]
        want = np.array([removal_probability((v, 1 - v)) for v in values])
        counts = np.zeros(len(values))
        recs = scored(values)
        n = 10_000
        for seed in range(n):
            try:
                kept, _ = progressive_prune(recs, FixedScoreProvider(), np.zeros((2, 2)), seed, max_rounds=1)
            except EmptySurvivorSet:
                raise AssertionError("the gap-1 image can never be removed")
            alive = {r.image_id for r in kept}
            counts += [r.image_id not in alive for r in recs]
        assert np.all(np.abs(counts / n - want) <= 0.02)

    def test_provider_errors_are_wrapped(self):
        with pytest.raises(ProviderFailure):
            progressive_prune(scored([1.0]), BrokenProvider(exc=RuntimeError("boom")), np.zeros((2, 2)), 0)

    @pytest.mark.parametrize("bad", [np.ones((1, 3)), np.array([[0.7, 0.7]]), np.array([[np.nan, 1]])])
    def test_bad_scores_rejected(self, bad):
        with pytest.raises(ProviderFailure):
            progressive_prune(scored([1.0]), BrokenProvider(scores=bad), np.zeros((2, 2)), 0)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.integers(0, 2**32))
    def test_conservation(self, values, seed):
        recs = scored(values + [1.0])
        kept, trace = progressive_prune(recs, FixedScoreProvider(), np.zeros((2, 2)), seed)
        removed = [r["image_id"] for r in trace.removal_records()]
        assert len(kept) + len(removed) == len(recs)
        assert len(set(removed)) == len(removed)


class TestLogisticProvider:
    def test_scores_sum_to_one(self, rng):
        p = LogisticScoreProvider()
        p.train(rng.normal(1, 1, (20, 3)), rng.normal(-1, 1, (20, 3)))
        S = p.score(rng.normal(0, 1, (7, 3)))
        assert S.shape == (7, 2)
        np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-12)

    def test_score_before_train(self):
        with pytest.raises(ProviderFailure):
            LogisticScoreProvider().score(np.ones((1, 2)))

    def test_unknown_provider(self):
        with pytest.raises(ValueError):
            make_provider("cnn")

    def test_images_mixed_into_negatives_get_pruned(self, rng):
        # positives that duplicate negatives receive ambiguous scores
        neg = rng.normal(0, 1, (40, 5))
        clean = rng.normal(0, 1, (40, 5)) + 3.0
        recs = records(np.vstack([clean, neg[:20]]))
        removed_copy, removed_clean = 0, 0
        for seed in range(20):
            kept, _ = progressive_prune(recs, LogisticScoreProvider(), neg, seed, "v", max_rounds=1)
            alive = {r.image_id for r in kept}
            removed_clean += sum(r.image_id not in alive for r in recs[:40])
            removed_copy += sum(r.image_id not in alive for r in recs[40:])
        assert removed_copy / (20 * 20) > 3 * removed_clean / (20 * 40)
