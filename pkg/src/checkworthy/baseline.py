"""Linear SVM over unigram counts, trained with Pegasos-style subgradient steps."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import Dataset, SplitMix64, derive_seed
from .textenc import normalize
from .train import Prediction


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class UnigramVectorizer:
    vocabulary: dict = field(default_factory=dict)
    min_df: int = 2

    @property
    def n_features(self) -> int:
        return len(self.vocabulary)

    def transform_text(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        """Sparse count vector of ``text`` as (sorted indices, counts)."""
        counts = Counter(self.vocabulary[w] for w in normalize(text).split()
                         if w in self.vocabulary)
        idx = np.array(sorted(counts), dtype=np.int64)
        return idx, np.array([counts[i] for i in idx], dtype=np.float64)

    def transform(self, data) -> list[tuple[np.ndarray, np.ndarray]]:
        return [self.transform_text(s.text) for s in data]


def fit_vectorizer(train: Dataset, min_df: int = 2) -> UnigramVectorizer:
    """Vocabulary of normalized words with document frequency >= ``min_df``."""
    if len(train) == 0:
        raise BaselineError("cannot fit a vocabulary on an empty dataset")
    df = Counter()
    for s in train:
        df.update(set(normalize(s.text).split()))
    words = sorted(w for w, c in df.items() if c >= min_df)
    return UnigramVectorizer({w: i for i, w in enumerate(words)}, min_df)


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    lam: float
    objective_trace: list = field(default_factory=list)

    def decision(self, x: tuple[np.ndarray, np.ndarray]) -> float:
        idx, val = x
        return float(self.weights[idx] @ val) + self.bias


def objective(weights: np.ndarray, bias: float, lam: float, xs, ys) -> float:
    """Mean hinge loss plus ``lam/2 * (|w|^2 + b^2)``."""
    hinge = sum(max(0.0, 1.0 - y * (float(weights[i] @ v) + bias)) for (i, v), y in zip(xs, ys))
    return hinge / len(ys) + 0.5 * lam * (float(weights @ weights) + bias * bias)


def train_svm(train: Dataset, vectorizer: UnigramVectorizer, lam: float = 1e-3,
              epochs: int = 10, seed: int = 0) -> LinearModel:
    """Pegasos on the primal hinge objective, one sample per step.

    Step ``t`` uses ``eta = 1 / (lam * t)``, then projects onto the ball of
    radius ``1/sqrt(lam)``.  The bias is an extra constant feature and is
    regularized with the weights.  Sample order is reshuffled each epoch by
    SplitMix64 seeded from ``seed`` and the epoch index.
    """
    if lam <= 0:
        raise BaselineError("lambda must be positive")
    if not train.labeled:
        raise BaselineError("training data must be labeled")
    ys = [1.0 if s.label == 1 else -1.0 for s in train]
    if len(set(ys)) < 2:
        raise BaselineError("training data contains a single class")
    xs = vectorizer.transform(train)
    dim = vectorizer.n_features

    # w = scale * v, with the bias as the last coordinate of v
    v = np.zeros(dim + 1)
    scale, sq_norm = 1.0, 0.0
    radius = 1.0 / math.sqrt(lam)
    trace = [objective(np.zeros(dim), 0.0, lam, xs, ys)]
    t = 0
    for epoch in range(epochs):
        order = SplitMix64(derive_seed(seed, epoch)).shuffle(list(range(len(ys))))
        for i in order:
            t += 1
            eta = 1.0 / (lam * t)
            idx, val = xs[i]
            margin = ys[i] * scale * (float(v[idx] @ val) + v[dim])
            shrink = 1.0 - eta * lam
            if shrink == 0.0:
                v[:] = 0.0
                scale, sq_norm = 1.0, 0.0
            else:
                scale *= shrink
                sq_norm *= shrink * shrink
            if margin < 1.0:
                step = eta * ys[i] / scale
                old = v[idx] @ v[idx] + v[dim] ** 2
                v[idx] += step * val
                v[dim] += step
                sq_norm += scale * scale * (v[idx] @ v[idx] + v[dim] ** 2 - old)
            norm = math.sqrt(max(sq_norm, 0.0))
            if norm > radius:
                scale *= radius / norm
                sq_norm = radius * radius
            if scale < 1e-9:
                v *= scale
                scale = 1.0
        w = scale * v
        trace.append(objective(w[:dim], float(w[dim]), lam, xs, ys))
    w = scale * v
    return LinearModel(w[:dim].copy(), float(w[dim]), lam, trace)


def score(model: LinearModel, vectorizer: UnigramVectorizer, data) -> list[Prediction]:
    """Raw decision values; unseen words are ignored."""
    return [Prediction(s.id, model.decision(x), s.topic_id)
            for s, x in zip(data, vectorizer.transform(data))]
