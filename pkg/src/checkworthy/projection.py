"""Shared-representation export and 2-D projections (PCA, exact t-SNE).

``overlap_statistic`` turns a projection into numbers: for each pair of
languages, the fraction of points whose nearest 2-D neighbour has the other
language.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Dataset
from .model import forward
from .textenc import encode_batch
from .train import PREDICT_BATCH, EnsembleModel, running_mean

log = logging.getLogger(__name__)


class ProjectionError(ValueError):
    pass


@dataclass
class EmbeddingMatrix:
    values: np.ndarray
    ids: list[str]
    languages: list[str]
    labels: list[int | None]

    def __post_init__(self):
        n = self.values.shape[0]
        if not (len(self.ids) == len(self.languages) == len(self.labels) == n):
            raise ProjectionError("metadata rows do not match embedding rows")
        if not np.isfinite(self.values).all():
            raise ProjectionError("embeddings contain non-finite values")

    def __len__(self):
        return self.values.shape[0]

    def to_tsv(self) -> str:
        h = self.values.shape[1]
        lines = ["id\tlanguage\tlabel\t" + "\t".join(f"e{j}" for j in range(h))]
        for i, sid in enumerate(self.ids):
            lab = "" if self.labels[i] is None else str(self.labels[i])
            lines.append(f"{sid}\t{self.languages[i]}\t{lab}\t"
                         + "\t".join(repr(float(x)) for x in self.values[i]))
        return "\n".join(lines) + "\n"


@dataclass
class ProjectionResult:
    coords: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def to_tsv(self, meta: EmbeddingMatrix) -> str:
        lines = ["id\tlanguage\tlabel\tx\ty"]
        for i, sid in enumerate(meta.ids):
            lab = "" if meta.labels[i] is None else str(meta.labels[i])
            x, y = self.coords[i]
            lines.append(f"{sid}\t{meta.languages[i]}\t{lab}\t{float(x)!r}\t{float(y)!r}")
        return "\n".join(lines) + "\n"


def extract_embeddings(model: EnsembleModel, data: Dataset, member="mean") -> EmbeddingMatrix:
    """Shared-layer activations per sample, from one member or averaged."""
    if member == "mean":
        chosen = model.members
    else:
        member = int(member)
        if not 0 <= member < len(model.members):
            raise IndexError(f"member {member} out of range (ensemble has {len(model.members)})")
        chosen = [model.members[member]]
    ids, mask = encode_batch([s.text for s in data], model.encoder)
    n = len(data)
    per = np.zeros((len(chosen), n, chosen[0].hidden))
    for j, params in enumerate(chosen):
        for start in range(0, n, PREDICT_BATCH):
            sl = slice(start, start + PREDICT_BATCH)
            per[j, sl] = forward(params, ids[sl], mask[sl]).shared
    values = running_mean(per) if n else np.zeros((0, chosen[0].hidden))
    return EmbeddingMatrix(values, [s.id for s in data], [s.language for s in data],
                           [s.label for s in data])


def jacobi_eigh(a: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm is at most
    ``tol * max(1, |A|_F)``.  Returns ``(eigenvalues, eigenvectors)`` sorted by
    decreasing eigenvalue, eigenvectors in columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    v = np.eye(n)
    limit = tol * max(1.0, np.linalg.norm(a))

    def off(m):
        # direct sum; subtracting the diagonal from the total cancels badly
        return float(np.linalg.norm(m - np.diag(np.diag(m))))

    for _ in range(max_sweeps):
        if off(a) <= limit:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    else:
        if off(a) > limit:
            raise ArithmeticError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, EmbeddingMatrix) else np.asarray(x, dtype=np.float64)


def pca_2d(embeddings) -> ProjectionResult:
    """Project centred rows onto the two leading covariance eigenvectors.

    Each axis is sign-fixed so that its largest-magnitude loading is positive.
    """
    x = _values(embeddings)
    n, h = x.shape
    if n < 3 or h < 2:
        raise ProjectionError(f"PCA needs n >= 3 and h >= 2, got n={n}, h={h}")
    centred = x - x.mean(axis=0)
    cov = centred.T @ centred / (n - 1)
    cov = (cov + cov.T) / 2
    evals, evecs = jacobi_eigh(cov)
    evals = np.clip(evals, 0.0, None)
    total = evals.sum()
    if total <= 0.0 or evals[0] <= 1e-14 * max(1.0, np.abs(x).max()) ** 2:
        raise ProjectionError("data has rank 0 (all rows identical)")
    axes = evecs[:, :2].copy()
    for j in range(2):
        if axes[np.argmax(np.abs(axes[:, j])), j] < 0:
            axes[:, j] *= -1
    return ProjectionResult(centred @ axes, "pca", {
        "explained_variance": evals[:2].copy(),
        "explained_variance_ratio": evals[:2] / total,
        "axes": axes,
        "mean": x.mean(axis=0),
    })


def _sq_distances(x: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def conditional_probabilities(d2: np.ndarray, perplexity: float, tol: float = 1e-5,
                              max_iter: int = 200) -> np.ndarray:
    """Row-wise Gaussian neighbour probabilities matching ``ln(perplexity)``.

    The precision of each row is found by bisection (doubling/halving until
    bracketed) so that the row entropy is within ``tol`` nats of the target.
    """
    n = d2.shape[0]
    target = math.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        di = np.delete(d2[i], i)
        di = di - di.min()
        beta, lo, hi = 1.0, 0.0, math.inf
        for _ in range(max_iter):
            e = np.exp(-di * beta)
            z = e.sum()
            entropy = math.log(z) + beta * float(di @ e) / z
            diff = entropy - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2 if hi == math.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        else:
            log.warning("perplexity search for point %d stopped at entropy error %.2e", i, diff)
        p[i, np.arange(n) != i] = e / z
    return p


def joint_probabilities(x: np.ndarray, perplexity: float) -> np.ndarray:
    p = conditional_probabilities(_sq_distances(x), perplexity)
    p = p + p.T
    return p / p.sum()


def student_t_affinities(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(Q, kernel)`` where kernel is ``1/(1+|y_i-y_j|^2)`` with a zero diagonal."""
    num = 1.0 / (1.0 + _sq_distances(y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-300))))


def tsne_2d(embeddings, perplexity: float = 30.0, iterations: int = 1000, seed: int = 0,
            learning_rate: float = 200.0, exaggeration: float = 12.0,
            exaggeration_iters: int = 250) -> ProjectionResult:
    """Exact O(n^2) t-SNE.

    Momentum is 0.5 while the affinities are exaggerated and 0.8 after.
    Step sizes use per-coordinate adaptive gains (floor 0.01).  The KL trace
    has ``iterations + 1`` entries, always against the unexaggerated P.
    """
    x = _values(embeddings).copy()
    n = x.shape[0]
    if n < 10:
        raise ProjectionError(f"t-SNE needs at least 10 samples, got {n}")
    if not 3 <= perplexity <= (n - 1) / 3:
        raise ProjectionError(f"perplexity must lie in [3, {(n - 1) / 3:.3g}] for n={n}, "
                              f"got {perplexity}")
    rng = np.random.default_rng(seed)
    d2 = _sq_distances(x)
    off = ~np.eye(n, dtype=bool)
    if (d2[off] == 0).any():
        log.warning("duplicate points found; adding seeded jitter of scale 1e-8")
        x = x + rng.normal(scale=1e-8, size=x.shape)

    p = joint_probabilities(x, perplexity)
    y = rng.normal(scale=1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    q, _ = student_t_affinities(y)
    trace = [kl_divergence(p, q)]
    for it in range(iterations):
        exag = exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < exaggeration_iters else 0.8
        q, num = student_t_affinities(y)
        w = (exag * p - q) * num
        grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
        same = np.sign(grad) == np.sign(velocity)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)
        q, _ = student_t_affinities(y)
        trace.append(kl_divergence(p, q))
    return ProjectionResult(y, "tsne", {"kl_trace": trace, "P": p, "Q": q,
                                        "perplexity": perplexity})


def overlap_statistic(result, languages) -> dict[tuple[str, str], float]:
    """Nearest-neighbour cross-language rate for every ordered language pair.

    For pair (a, b) only points of languages a and b are considered; the value
    is the fraction of them whose nearest neighbour belongs to the other
    language.  The mapping is symmetric and has no (a, a) entries.
    """
    coords = result.coords if isinstance(result, ProjectionResult) else np.asarray(result)
    langs = np.asarray(languages)
    present = sorted(set(langs.tolist()))
    if len(present) < 2:
        raise ProjectionError("overlap needs at least two languages")
    out = {}
    for i, a in enumerate(present):
        for b in present[i + 1:]:
            sel = np.nonzero((langs == a) | (langs == b))[0]
            if len(sel) < 2:
                continue
            d = _sq_distances(coords[sel])
            np.fill_diagonal(d, np.inf)
            nn = np.argmin(d, axis=1)
            rate = float(np.mean(langs[sel][nn] != langs[sel]))
            out[a, b] = out[b, a] = rate
    return out
