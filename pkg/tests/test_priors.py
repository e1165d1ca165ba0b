import numpy as np
import pytest

from hoiprior import (
    BACKGROUND,
    NONE_SLOT,
    CategoryRef,
    DetectionRecord,
    EmbeddingTable,
    GroundTruthTriplet,
    LinearLayer,
    Matrix,
    build_caq,
    embed_priors,
    filter_detections,
    oracle_priors,
    score_categories,
    select_priors,
)
from hoiprior.errors import ConfigError, MissingEmbeddingError
from hoiprior.priors import PriorEmbeddings

BOX = (0.1, 0.1, 0.5, 0.5)


def det(cat, conf, box=BOX):
    return DetectionRecord(category_id=cat, confidence=conf, box=box)


def gt(cat):
    return GroundTruthTriplet(
        b_h=(0.5, 0.5, 0.2, 0.2), b_o=(0.4, 0.4, 0.2, 0.2), object_category=cat, verbs=frozenset({0})
    )


def brute_force_scores(dets):
    """Per-category max / mean pooled the long way round."""
    by_cat = {}
    for d in dets:
        by_cat.setdefault(d.category_id, []).append(d.confidence)
    out = {}
    for cat, confs in by_cat.items():
        n = len(confs)
        out[cat] = max(confs) + (n / 2) * (sum(confs) / n)
    return out


class TestFilterDetections:
    def test_default_threshold_case(self):
        kept = filter_detections([det(0, 0.9), det(1, 0.1)], t_det=0.15)
        assert [d.confidence for d in kept] == [0.9]

    def test_empty(self):
        assert filter_detections([], t_det=0.5) == []

    def test_drop_category(self):
        dets = [det(0, 0.9), det(1, 0.9), det(0, 0.8)]
        kept = filter_detections(dets, t_det=0.0, drop_category=0)
        assert [d.category_id for d in kept] == [1]

    def test_order_preserved(self):
        dets = [det(2, 0.5), det(1, 0.9), det(2, 0.7)]
        kept = filter_detections(dets, t_det=0.4)
        assert [d.category_id for d in kept] == [2, 1, 2]

    def test_threshold_is_inclusive(self):
        kept = filter_detections([det(0, 0.15)], t_det=0.15)
        assert len(kept) == 1

    def test_bad_threshold(self):
        with pytest.raises(ConfigError):
            filter_detections([], t_det=1.5)


class TestScoreCategories:
    def test_absent_category_scores_zero(self):
        scores = score_categories([])
        assert scores == {}
        assert scores.get(3, 0.0) == 0.0

    def test_two_detection_case(self):
        scores = score_categories([det(0, 0.9), det(0, 0.6)])
        assert abs(scores[0] - 1.65) <= 1e-12

    def test_single_detection_case(self):
        scores = score_categories([det(0, 0.8)])
        assert abs(scores[0] - 1.2) <= 1e-12

    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            dets = [
                det(int(rng.integers(0, 5)), float(rng.uniform(0, 1)))
                for _ in range(int(rng.integers(0, 12)))
            ]
            assert score_categories(dets) == brute_force_scores(dets)

    def test_raising_t_det_never_raises_scores(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            dets = [
                det(int(rng.integers(0, 4)), float(rng.uniform(0, 1)))
                for _ in range(int(rng.integers(1, 10)))
            ]
            lo, hi = sorted(rng.uniform(0, 1, size=2))
            s_lo = brute_force_scores(filter_detections(dets, lo))
            s_hi = brute_force_scores(filter_detections(dets, hi))
            for cat in set(s_lo) | set(s_hi):
                assert s_hi.get(cat, 0.0) <= s_lo.get(cat, 0.0) + 1e-15
            # production path agrees with the oracle on both thresholds
            assert score_categories(filter_detections(dets, lo)) == s_lo
            assert score_categories(filter_detections(dets, hi)) == s_hi


class TestSelectPriors:
    def test_two_candidate_case(self):
        priors = select_priors({0: 1.6, 1: 0.3}, t_can=0.3, n_c=3)
        assert list(priors) == [CategoryRef.real(0), CategoryRef.real(1), BACKGROUND]

    def test_no_candidates(self):
        priors = select_priors({}, t_can=0.3, n_c=4)
        assert list(priors) == [BACKGROUND, NONE_SLOT, NONE_SLOT, NONE_SLOT]

    def test_below_threshold_dropped(self):
        priors = select_priors({0: 0.29}, t_can=0.3, n_c=3)
        assert list(priors) == [BACKGROUND, NONE_SLOT, NONE_SLOT]

    def test_many_candidates_top_k(self):
        scores = {cat: 1.0 + cat * 0.1 for cat in range(10)}
        priors = select_priors(scores, t_can=0.3, n_c=4)
        assert priors.real_ids() == [9, 8, 7]
        assert priors.slots[3] == BACKGROUND

    def test_tie_breaks_ascending_id(self):
        priors = select_priors({5: 1.0, 2: 1.0, 9: 1.0}, t_can=0.5, n_c=3)
        assert priors.real_ids() == [2, 5]

    def test_structure_invariants(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            scores = {
                int(cat): float(rng.uniform(0, 2))
                for cat in rng.choice(20, size=rng.integers(0, 8), replace=False)
            }
            t_can = float(rng.uniform(0, 1))
            n_c = int(rng.integers(2, 7))
            priors = select_priors(scores, t_can, n_c)
            assert len(priors) == n_c
            assert sum(1 for s in priors if s.kind == "background") == 1
            reals = priors.real_ids()
            real_scores = [scores[c] for c in reals]
            assert all(s >= t_can for s in real_scores)
            assert real_scores == sorted(real_scores, reverse=True)

    def test_n_c_too_small(self):
        with pytest.raises(ConfigError):
            select_priors({}, t_can=0.3, n_c=1)


def identity_proj(dim):
    return LinearLayer(weight=Matrix(np.eye(dim)), bias=np.zeros(dim))


class TestEmbedPriors:
    def test_identity_projection_unit_basis(self):
        table = EmbeddingTable(
            dim=3,
            entries={0: np.array([1.0, 0, 0]), 1: np.array([0, 1.0, 0])},
            background_vector=np.array([0, 0, 1.0]),
        )
        priors = select_priors({0: 1.0, 1: 0.5}, t_can=0.1, n_c=3)
        emb = embed_priors(priors, table, identity_proj(3))
        assert emb.e.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]

    def test_none_slot_ignores_projection_bias(self):
        table = EmbeddingTable(dim=2, entries={0: np.ones(2)}, background_vector=np.ones(2))
        proj = LinearLayer(weight=Matrix(np.eye(2)), bias=np.array([7.0, 7.0]))
        priors = select_priors({}, t_can=0.5, n_c=3)  # background + 2 none
        emb = embed_priors(priors, table, proj)
        assert np.array_equal(emb.e.array[1], np.zeros(2))
        assert np.array_equal(emb.e.array[2], np.zeros(2))
        assert np.array_equal(emb.e.array[0], np.array([8.0, 8.0]))

    def test_deterministic(self):
        table = EmbeddingTable(dim=2, entries={0: np.array([0.5, 0.25])}, background_vector=np.ones(2))
        priors = select_priors({0: 1.0}, t_can=0.1, n_c=2)
        a = embed_priors(priors, table, identity_proj(2))
        b = embed_priors(priors, table, identity_proj(2))
        assert a.e == b.e

    def test_missing_entry(self):
        table = EmbeddingTable(dim=2, entries={}, background_vector=np.ones(2))
        priors = select_priors({4: 1.0}, t_can=0.1, n_c=2)
        with pytest.raises(MissingEmbeddingError):
            embed_priors(priors, table, identity_proj(2))


class TestBuildCaq:
    def _embeddings(self, n_c, d=4):
        rng = np.random.default_rng(n_c)
        real = [CategoryRef.real(i) for i in range(n_c - 2)]
        slots = tuple(real + [BACKGROUND] + [NONE_SLOT] * (n_c - len(real) - 1))
        rows = rng.standard_normal((n_c, d))
        for i, s in enumerate(slots):
            if s.kind == "none":
                rows[i] = 0.0
        from hoiprior import PriorCategories

        return PriorEmbeddings(e=Matrix(rows), source=PriorCategories(slots))

    def test_exact_repeat_default_sizes(self):
        emb = self._embeddings(4)
        caq = build_caq(emb, 100)
        for j in range(100):
            assert np.array_equal(caq.q.array[j], emb.e.array[j % 4])
        counts = {i: 0 for i in range(4)}
        for j in range(100):
            counts[j % 4] += 1
        assert counts == {0: 25, 1: 25, 2: 25, 3: 25}

    def test_non_divisible_counts(self):
        emb = self._embeddings(3)
        caq = build_caq(emb, 100)
        counts = [0, 0, 0]
        for j in range(100):
            assert caq.prior_of_query[j] == emb.source.slots[j % 3]
            counts[j % 3] += 1
        assert sorted(counts, reverse=True) == [34, 33, 33]

    def test_n_q_equals_n_c(self):
        emb = self._embeddings(4)
        caq = build_caq(emb, 4)
        assert caq.q == emb.e
        assert caq.prior_of_query == emb.source.slots

    def test_round_trip_recovers_embeddings(self):
        emb = self._embeddings(4)
        caq = build_caq(emb, 10)
        by_slot = {}
        for j in range(10):
            by_slot.setdefault(j % 4, caq.q.array[j])
            assert np.array_equal(by_slot[j % 4], caq.q.array[j])
        recovered = np.stack([by_slot[i] for i in range(4)])
        assert np.array_equal(recovered, emb.e.array)

    def test_n_q_too_small(self):
        with pytest.raises(ConfigError):
            build_caq(self._embeddings(4), 3)


class TestOraclePriors:
    def test_frequency_case(self):
        priors = oracle_priors([gt(1), gt(1), gt(2)], n_c=4)
        assert list(priors) == [CategoryRef.real(1), CategoryRef.real(2), BACKGROUND, NONE_SLOT]

    def test_empty_gt(self):
        priors = oracle_priors([], n_c=3)
        assert list(priors) == [BACKGROUND, NONE_SLOT, NONE_SLOT]

    def test_overflow_keeps_most_frequent(self):
        gts = [gt(0), gt(1), gt(1), gt(2), gt(2), gt(2), gt(3)]
        priors = oracle_priors(gts, n_c=3)
        # categories 2 (x3) and 1 (x2) win; order of first appearance
        assert priors.real_ids() == [1, 2]

    def test_overflow_tie_breaks_ascending_id(self):
        # all frequencies tie, so ids 3 and 5 are kept; slots keep
        # first-appearance order
        gts = [gt(5), gt(3), gt(7)]
        priors = oracle_priors(gts, n_c=3)
        assert priors.real_ids() == [5, 3]
