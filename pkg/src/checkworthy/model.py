"""Shared encoder with check-worthiness and language-identification heads.

Architecture (all float64)::

    pooled  = mean of embedding rows over unpadded positions
    shared  = tanh(pooled @ W_s + b_s)
    head_t  = softmax(relu(shared @ W1_t + b1_t) @ W2_t + b2_t)   t in {cwd, li}

The training objective is ``alpha * J_cwd + (1 - alpha) * J_li`` where each
task loss is a class-weighted mean negative log-likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

TASKS = ("cwd", "li")


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class ModelParams:
    embedding: np.ndarray
    shared_w: np.ndarray
    shared_b: np.ndarray
    cwd_w1: np.ndarray
    cwd_b1: np.ndarray
    cwd_w2: np.ndarray
    cwd_b2: np.ndarray
    li_w1: np.ndarray
    li_b1: np.ndarray
    li_w2: np.ndarray
    li_b2: np.ndarray

    def __post_init__(self):
        self.check()

    @staticmethod
    def names() -> list[str]:
        return [f.name for f in fields(ModelParams)]

    def items(self):
        return [(n, getattr(self, n)) for n in self.names()]

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden(self) -> int:
        return self.shared_w.shape[1]

    def n_classes(self, task: str) -> int:
        return getattr(self, f"{task}_w2").shape[1]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {n: a.shape for n, a in self.items()}

    def check(self):
        v, d = self.embedding.shape
        h = self.shared_w.shape[1]
        expect = {"shared_w": (d, h), "shared_b": (h,)}
        for t in TASKS:
            c = getattr(self, f"{t}_w2").shape[1]
            if c < 2:
                raise ValueError(f"{t} head needs at least 2 classes")
            expect.update({f"{t}_w1": (h, h), f"{t}_b1": (h,),
                           f"{t}_w2": (h, c), f"{t}_b2": (c,)})
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.n_classes("cwd") != 2:
            raise ValueError("check-worthiness head must have exactly 2 classes")

    def copy(self) -> "ModelParams":
        return ModelParams(**{n: a.copy() for n, a in self.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{n: np.zeros_like(a) for n, a in self.items()})

    def equal(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, getattr(other, n)) for n, a in self.items())


def _glorot(rng, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(vocab_size: int, n_languages: int, embed_dim: int = 64,
                hidden: int = 64, seed: int = 0) -> ModelParams:
    """Glorot-uniform matrices and zero biases from ``numpy.random.default_rng(seed)``.

    Matrices are drawn in field order, so the stream is stable.
    """
    rng = np.random.default_rng(seed)
    return ModelParams(
        embedding=_glorot(rng, vocab_size, embed_dim),
        shared_w=_glorot(rng, embed_dim, hidden),
        shared_b=np.zeros(hidden),
        cwd_w1=_glorot(rng, hidden, hidden),
        cwd_b1=np.zeros(hidden),
        cwd_w2=_glorot(rng, hidden, 2),
        cwd_b2=np.zeros(2),
        li_w1=_glorot(rng, hidden, hidden),
        li_b1=np.zeros(hidden),
        li_w2=_glorot(rng, hidden, n_languages),
        li_b2=np.zeros(n_languages),
    )


@dataclass(frozen=True)
class JointLossConfig:
    alpha: float = 0.6
    cwd_weights: tuple[float, ...] | None = None
    li_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def task_weight(self, task: str) -> float:
        return self.alpha if task == "cwd" else 1.0 - self.alpha

    def class_weights(self, task: str, n_classes: int) -> np.ndarray:
        w = self.cwd_weights if task == "cwd" else self.li_weights
        if w is None:
            return np.ones(n_classes)
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (n_classes,):
            raise ValueError(f"{task} class weights need {n_classes} entries")
        return w


def inverse_frequency_weights(labels, n_classes: int) -> tuple[float, ...]:
    """``n / (C * count_c)`` per class; absent classes get weight 1."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
    n = counts.sum()
    return tuple(float(n / (n_classes * c)) if c else 1.0 for c in counts)


@dataclass
class HeadTrace:
    hidden_pre: np.ndarray
    hidden: np.ndarray
    scores: np.ndarray
    log_probs: np.ndarray
    probs: np.ndarray


@dataclass
class ForwardTrace:
    ids: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray
    pooled: np.ndarray
    shared: np.ndarray
    heads: dict[str, HeadTrace] = field(default_factory=dict)
    shapes: dict = field(default_factory=dict)

    def probs(self, task: str) -> np.ndarray:
        return self.heads[task].probs


def log_softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(scores: np.ndarray) -> np.ndarray:
    z = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def forward(params: ModelParams, ids: np.ndarray, mask: np.ndarray) -> ForwardTrace:
    """Run a batch of encoded sequences (``ids``/``mask`` of shape (B, T))."""
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=bool)
    if ids.ndim != 2 or ids.shape != mask.shape or ids.shape[0] == 0:
        raise ValueError(f"expected non-empty (B, T) ids and mask, got {ids.shape} / {mask.shape}")
    if ids.max() >= params.vocab_size or ids.min() < 0:
        raise ValueError(f"token id outside embedding table of size {params.vocab_size}")
    lengths = mask.sum(axis=1)
    if (lengths == 0).any():
        raise ValueError("every sequence needs at least one unmasked token")

    m = mask.astype(np.float64)
    pooled = np.einsum("bt,btd->bd", m, params.embedding[ids]) / lengths[:, None]
    shared = np.tanh(pooled @ params.shared_w + params.shared_b)
    trace = ForwardTrace(ids, mask, lengths, pooled, shared, shapes=params.shapes())
    for t in TASKS:
        pre = shared @ getattr(params, f"{t}_w1") + getattr(params, f"{t}_b1")
        hid = np.maximum(pre, 0.0)
        scores = hid @ getattr(params, f"{t}_w2") + getattr(params, f"{t}_b2")
        logp = log_softmax(scores)
        trace.heads[t] = HeadTrace(pre, hid, scores, logp, softmax(scores))
    return trace


def forward_sequences(params: ModelParams, batch) -> ForwardTrace:
    from .textenc import stack
    ids, mask = stack(batch)
    return forward(params, ids, mask)


def _check_gold(gold, n_classes):
    gold = np.asarray(gold, dtype=np.int64)
    if gold.size and (gold.min() < 0 or gold.max() >= n_classes):
        bad = gold[(gold < 0) | (gold >= n_classes)][0]
        raise IndexError(f"class index {bad} outside [0, {n_classes})")
    return gold


def task_loss(probabilities, gold, weights=None) -> float:
    """Weighted mean negative log-likelihood over the batch.

    ``sum_i w[gold_i] * -ln p_i[gold_i] / B``
    """
    p = np.asarray(probabilities, dtype=np.float64)
    gold = _check_gold(gold, p.shape[1])
    w = np.ones(p.shape[1]) if weights is None else np.asarray(weights, dtype=np.float64)
    picked = p[np.arange(len(gold)), gold]
    return float(np.sum(w[gold] * -np.log(picked)) / len(gold))


def _nll_from_log_probs(log_probs, gold, weights) -> float:
    picked = log_probs[np.arange(len(gold)), gold]
    return float(np.sum(weights[gold] * -picked) / len(gold))


def joint_loss(j_cwd: float, j_li: float, config: JointLossConfig) -> float:
    return config.alpha * j_cwd + (1.0 - config.alpha) * j_li


def losses(trace: ForwardTrace, gold_cwd, gold_li, config: JointLossConfig) -> dict[str, float]:
    """Per-task and joint losses computed from the stable log-probabilities."""
    out = {}
    for t, gold in (("cwd", gold_cwd), ("li", gold_li)):
        lp = trace.heads[t].log_probs
        g = _check_gold(gold, lp.shape[1])
        out[t] = _nll_from_log_probs(lp, g, config.class_weights(t, lp.shape[1]))
    out["joint"] = joint_loss(out["cwd"], out["li"], config)
    return out


def backward(trace: ForwardTrace, gold_cwd, gold_li, config: JointLossConfig,
             params: ModelParams) -> ModelParams:
    """Exact gradient of the joint loss with respect to every parameter."""
    if trace.shapes != params.shapes():
        raise ValueError("trace was produced with parameters of different shape")
    batch = trace.ids.shape[0]
    grads = {}
    d_shared = np.zeros_like(trace.shared)
    for t, gold in (("cwd", gold_cwd), ("li", gold_li)):
        head = trace.heads[t]
        c = head.probs.shape[1]
        g = _check_gold(gold, c)
        if len(g) != batch:
            raise ValueError(f"{t} gold has {len(g)} entries for a batch of {batch}")
        w = config.class_weights(t, c)[g] * (config.task_weight(t) / batch)
        d_scores = head.probs.copy()
        d_scores[np.arange(batch), g] -= 1.0
        d_scores *= w[:, None]
        grads[f"{t}_w2"] = head.hidden.T @ d_scores
        grads[f"{t}_b2"] = d_scores.sum(axis=0)
        d_hid = d_scores @ getattr(params, f"{t}_w2").T
        d_pre = d_hid * (head.hidden_pre > 0)
        grads[f"{t}_w1"] = trace.shared.T @ d_pre
        grads[f"{t}_b1"] = d_pre.sum(axis=0)
        d_shared += d_pre @ getattr(params, f"{t}_w1").T

    d_shared_pre = d_shared * (1.0 - trace.shared ** 2)
    grads["shared_w"] = trace.pooled.T @ d_shared_pre
    grads["shared_b"] = d_shared_pre.sum(axis=0)
    d_pooled = d_shared_pre @ params.shared_w.T / trace.lengths[:, None]

    d_emb = np.zeros_like(params.embedding)
    rows, cols = np.nonzero(trace.mask)
    # np.add.at accumulates in index order, keeping repeated ids reproducible
    np.add.at(d_emb, trace.ids[rows, cols], d_pooled[rows])
    grads["embedding"] = d_emb
    return ModelParams(**grads)


@dataclass
class AdamWState:
    m: ModelParams
    v: ModelParams
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def for_params(cls, params: ModelParams, **hyper) -> "AdamWState":
        return cls(params.zeros_like(), params.zeros_like(), **hyper)


def adamw_step(params: ModelParams, grads: ModelParams, state: AdamWState):
    """One decoupled-weight-decay Adam update, applied in place.

    ``w <- w - lr*wd*w - lr * m_hat / (sqrt(v_hat) + eps)``.  Raises
    :class:`NonFiniteError` before touching anything if a gradient entry is
    not finite.  Returns ``(params, state)``.
    """
    if state.lr <= 0:
        raise ValueError("learning rate must be positive")
    for name, g in grads.items():
        if g.shape != getattr(params, name).shape:
            raise ValueError(f"gradient {name} has shape {g.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient in {name} at step {state.step + 1}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    decay = 1.0 - state.lr * state.weight_decay
    for name, g in grads.items():
        w = getattr(params, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            w *= decay
        w -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
