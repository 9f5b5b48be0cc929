import math

import numpy as np
import pytest

from checkworthy import synthetic
from checkworthy.baseline import (BaselineError, LinearModel, fit_vectorizer, objective, score,
                                  train_svm)
from checkworthy.corpus import Dataset, Sample, SplitMix64, derive_seed


def dataset(texts, labels=None):
    labels = labels or [0] * len(texts)
    return Dataset(tuple(Sample(str(i), t, "en", l)
                         for i, (t, l) in enumerate(zip(texts, labels))), "train")


def dense_pegasos(xs, ys, lam, epochs, seed):
    """Textbook Pegasos on dense vectors with the bias appended."""
    dim = xs.shape[1]
    w = np.zeros(dim + 1)
    x1 = np.hstack([xs, np.ones((len(xs), 1))])
    t = 0
    for epoch in range(epochs):
        for i in SplitMix64(derive_seed(seed, epoch)).shuffle(list(range(len(ys)))):
            t += 1
            eta = 1.0 / (lam * t)
            hit = ys[i] * (w @ x1[i]) < 1.0
            w = (1 - eta * lam) * w
            if hit:
                w = w + eta * ys[i] * x1[i]
            w = w * min(1.0, (1 / math.sqrt(lam)) / max(np.linalg.norm(w), 1e-300))
    return w


@pytest.fixture(scope="module")
def toy():
    return synthetic.toy_corpus(300, seed=4)


class TestVectorizer:
    def test_min_df(self):
        data = dataset(["a b", "b c"])
        assert set(fit_vectorizer(data, min_df=1).vocabulary) == {"a", "b", "c"}
        assert set(fit_vectorizer(data, min_df=2).vocabulary) == {"b"}

    def test_counts_and_indices(self):
        vec = fit_vectorizer(dataset(["b a", "a c"]), min_df=1)
        assert vec.vocabulary == {"a": 0, "b": 1, "c": 2}
        idx, val = vec.transform_text("C a A zzz")
        assert idx.tolist() == [0, 2] and val.tolist() == [2.0, 1.0]

    def test_empty(self):
        with pytest.raises(BaselineError):
            fit_vectorizer(Dataset())


class TestTrain:
    def test_separable_toy(self, toy):
        vec = fit_vectorizer(toy, min_df=2)
        model = train_svm(toy, vec, lam=1e-4, epochs=20)
        preds = score(model, vec, toy)
        acc = np.mean([(p.score > 0) == (s.label == 1) for p, s in zip(preds, toy)])
        assert acc == 1.0
        assert np.isfinite(model.objective_trace).all()
        assert model.objective_trace[-1] <= model.objective_trace[0]

    def test_matches_dense_oracle(self, toy):
        data = toy.subset(range(60))
        vec = fit_vectorizer(data, min_df=1)
        model = train_svm(data, vec, lam=0.01, epochs=3, seed=5)
        xs = np.zeros((len(data), vec.n_features))
        for r, (idx, val) in enumerate(vec.transform(data)):
            xs[r, idx] = val
        ys = np.array([1.0 if s.label else -1.0 for s in data])
        ref = dense_pegasos(xs, ys, 0.01, 3, 5)
        np.testing.assert_allclose(model.weights, ref[:-1], rtol=1e-9, atol=1e-12)
        assert model.bias == pytest.approx(ref[-1], rel=1e-9, abs=1e-12)

    def test_strong_regularization(self, toy):
        vec = fit_vectorizer(toy)
        model = train_svm(toy, vec, lam=1e6, epochs=2)
        assert np.linalg.norm(model.weights) <= 1e-2

    def test_single_class(self):
        data = dataset(["a b", "a c"], [1, 1])
        with pytest.raises(BaselineError, match="single class"):
            train_svm(data, fit_vectorizer(data, 1))

    def test_deterministic(self, toy):
        vec = fit_vectorizer(toy)
        a = train_svm(toy, vec, epochs=3, seed=2)
        b = train_svm(toy, vec, epochs=3, seed=2)
        assert np.array_equal(a.weights, b.weights) and a.bias == b.bias
        c = train_svm(toy, vec, epochs=3, seed=3)
        assert not np.array_equal(a.weights, c.weights)

    def test_bad_lambda(self, toy):
        with pytest.raises(BaselineError):
            train_svm(toy, fit_vectorizer(toy), lam=0.0)


class TestScore:
    def test_zero_weights_give_bias(self):
        data = dataset(["a b", "b c", "q"])
        vec = fit_vectorizer(data, 1)
        model = LinearModel(np.zeros(vec.n_features), 0.25, 1.0)
        assert [p.score for p in score(model, vec, data)] == [0.25] * 3

    def test_oov_scores_bias(self):
        data = dataset(["a b", "b c"])
        vec = fit_vectorizer(data, 1)
        model = LinearModel(np.array([1.0, 2.0, 3.0]), -0.5, 1.0)
        assert score(model, vec, dataset(["never seen"]))[0].score == -0.5

    def test_doubled_counts_double_margin(self):
        data = dataset(["a b", "b c"])
        vec = fit_vectorizer(data, 1)
        model = LinearModel(np.array([0.3, -1.1, 0.7]), 0.0, 1.0)
        one, two = score(model, vec, dataset(["a b c", "a b c a b c"]))
        assert two.score == pytest.approx(2 * one.score, abs=1e-15)


def test_objective_hand_computed():
    xs = [(np.array([0]), np.array([1.0])), (np.array([0]), np.array([2.0]))]
    # hinge: max(0, 1 - 1*0.5) = 0.5 and max(0, 1 + 1*1.0) = 2.0
    val = objective(np.array([0.5]), 0.0, 0.2, xs, [1.0, -1.0])
    assert val == pytest.approx(1.25 + 0.1 * 0.25)
