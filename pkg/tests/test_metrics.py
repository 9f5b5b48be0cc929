import numpy as np
import pytest

from checkworthy.metrics import (K_VALUES, UndefinedMetricError, average_precision, evaluate,
                                 precision_at_k, r_precision, rank, reciprocal_rank)


def brute_force(scores: dict, gold: dict) -> tuple:
    """Metrics from explicit pairwise rank counting, without sorting.

    rank(i) = 1 + #{j : s_j > s_i, or s_j == s_i and id_j < id_i}
    """
    ranks = {i: 1 + sum(1 for j in scores if scores[j] > scores[i]
                        or (scores[j] == scores[i] and j < i)) for i in scores}
    pos_ranks = sorted(ranks[i] for i in scores if gold[i] == 1)
    n_rel = sum(gold.values())
    p_at = tuple(sum(1 for r in pos_ranks if r <= k) / k for k in K_VALUES)
    if n_rel == 0:
        return (None, None, None) + p_at
    ap = 0.0
    for hits, r in enumerate(pos_ranks, start=1):
        ap += hits / r
    return (ap / n_rel, 1.0 / pos_ranks[0],
            sum(1 for r in pos_ranks if r <= n_rel) / n_rel) + p_at


def ranked_labels(labels):
    """RankedList whose rank order reproduces ``labels``."""
    n = len(labels)
    scores = {f"{i:03d}": float(n - i) for i in range(n)}
    return rank(scores, {f"{i:03d}": l for i, l in enumerate(labels)})


class TestRank:
    def test_sort(self):
        assert rank({"a": 0.9, "b": 0.1}, {"a": 1, "b": 0}).ids == ("a", "b")

    def test_tie_break_by_id(self):
        assert rank({"b": 0.5, "a": 0.5}, {"a": 0, "b": 1}).ids == ("a", "b")

    def test_unknown_id(self):
        with pytest.raises(KeyError, match="zz"):
            rank({"zz": 0.3}, {"a": 1})

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            rank({"a": float("nan")}, {"a": 1})


class TestAveragePrecision:
    def test_hand_computed(self):
        # (1/1 + 2/3) / 2
        assert average_precision(ranked_labels([1, 0, 1, 0])) == pytest.approx(5 / 6, abs=1e-15)

    def test_perfect(self):
        assert average_precision(ranked_labels([1, 1, 1, 0, 0])) == 1.0

    def test_single_positive_last(self):
        assert average_precision(ranked_labels([0] * 6 + [1])) == pytest.approx(1 / 7)

    def test_no_positive(self):
        with pytest.raises(UndefinedMetricError):
            average_precision(ranked_labels([0, 0]))


class TestOtherMetrics:
    def test_reciprocal_rank(self):
        assert reciprocal_rank(ranked_labels([1, 0])) == 1.0
        assert reciprocal_rank(ranked_labels([0, 1])) == 0.5
        assert reciprocal_rank(ranked_labels([0, 0, 0, 1] + [0] * 6)) == 0.25

    def test_r_precision(self):
        assert r_precision(ranked_labels([1, 0, 0, 1])) == 0.5
        assert r_precision(ranked_labels([1, 1, 0])) == 1.0
        assert r_precision(ranked_labels([0, 0, 1, 1])) == 0.0

    def test_precision_at_k(self):
        assert precision_at_k(ranked_labels([1, 1, 1, 0, 0, 1]), 5) == 0.6
        assert precision_at_k(ranked_labels([1, 1, 1]), 5) == 0.6
        assert precision_at_k(ranked_labels([0, 1]), 1) == 0.0

    def test_unretrieved_positive_counts_against_ap(self):
        r = rank({"a": 1.0}, {"a": 1, "b": 1})
        assert average_precision(r) == 0.5


class TestEvaluate:
    def test_all_negative(self):
        gold = {str(i): 0 for i in range(5)}
        scores = {str(i): i / 10 for i in range(5)}
        report = evaluate(scores, gold)
        assert report.map is None and report.reciprocal_rank is None
        assert report.p_at_1 == 0.0 and report.p_at_50 == 0.0
        with pytest.raises(UndefinedMetricError):
            evaluate(scores, gold, strict=True)

    @pytest.mark.parametrize("n_pos", [3, 60])
    def test_perfect_scores(self, n_pos):
        gold = {f"p{i}": 1 for i in range(n_pos)}
        gold.update({f"n{i}": 0 for i in range(40)})
        scores = {k: float(v) for k, v in gold.items()}
        r = evaluate(scores, gold)
        assert r.map == r.reciprocal_rank == r.r_precision == 1.0
        for k in K_VALUES:
            assert getattr(r, f"p_at_{k}") == min(n_pos, k) / k

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(2021)
        checked = 0
        for _ in range(1000):
            n = int(rng.integers(1, 21))
            ids = [f"s{j}" for j in rng.permutation(100)[:n]]
            # coarse scores so ties happen often
            scores = {i: float(rng.integers(0, 6)) / 5 for i in ids}
            gold = {i: int(rng.random() < 0.4) for i in ids}
            assert evaluate(scores, gold).values() == brute_force(scores, gold)
            checked += 1
        assert checked == 1000

    def test_monotone_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 21))
            scores = {f"s{j}": float(rng.normal()) for j in range(n)}
            gold = {k: int(rng.random() < 0.5) for k in scores}
            gold["s0"] = 1
            moved = {k: float(np.exp(3 * v) + 7) for k, v in scores.items()}
            assert evaluate(scores, gold) == evaluate(moved, gold)

    def test_by_topic(self):
        gold = {"a": 1, "b": 0, "c": 0, "d": 1}
        scores = {"a": 0.9, "b": 0.8, "c": 0.7, "d": 0.6}
        topics = {"a": "t1", "b": "t1", "c": "t2", "d": "t2"}
        r = evaluate(scores, gold, topics=topics)
        assert r.map == pytest.approx((1.0 + 0.5) / 2)
        assert evaluate(scores, gold).map == pytest.approx((1 + 2 / 4) / 2)

    def test_ranges(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(1, 30))
            scores = {str(j): float(rng.random()) for j in range(n)}
            gold = {k: int(rng.random() < 0.3) for k in scores}
            r = evaluate(scores, gold)
            for v in r.values():
                assert v is None or 0.0 <= v <= 1.0
            assert r.p_at_1 in (0.0, 1.0)
            if r.map is not None:
                order = list(rank(scores, gold).labels)
                assert (r.map == 1.0) == (order == sorted(order, reverse=True))
