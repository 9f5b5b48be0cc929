"""Joint training, chunked ensembles, score fusion, alpha sweeps and model files."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .corpus import LANGUAGES, Dataset, DatasetError, SplitMix64, derive_seed, split_chunks
from .model import (AdamWState, JointLossConfig, ModelParams, NonFiniteError, adamw_step,
                    backward, forward, init_params, inverse_frequency_weights, losses)
from .textenc import EncoderConfig, encode_batch

log = logging.getLogger(__name__)

CHUNK_MODES = ("leave_one_out", "single_chunk")
PREDICT_BATCH = 256


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 16
    k: int = 5
    alpha: float = 0.6
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    data_seed: int = 13
    init_seed: int = 7
    embed_dim: int = 64
    hidden: int = 64
    languages: tuple[str, ...] = LANGUAGES
    class_weighting: bool = False
    chunk_mode: str = "leave_one_out"
    run_id: str = "checkworthy"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.k < 1:
            raise ValueError("epochs, batch_size and k must all be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.chunk_mode not in CHUNK_MODES:
            raise ValueError(f"chunk_mode must be one of {CHUNK_MODES}")
        if len(self.languages) < 2 or len(set(self.languages)) != len(self.languages):
            raise ValueError("need at least two distinct languages")
        object.__setattr__(self, "languages", tuple(self.languages))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["languages"] = list(self.languages)
        d["encoder"] = self.encoder.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["languages"] = tuple(d["languages"])
        d["encoder"] = EncoderConfig.from_dict(d["encoder"])
        return cls(**d)

    def member_seeds(self, member: int) -> tuple[int, int]:
        """(data shuffle seed, init seed) for ensemble member ``member``."""
        return derive_seed(self.data_seed, member, 1), derive_seed(self.init_seed, member, 2)


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    score: float
    topic_id: str = ""
    member_scores: tuple[float, ...] = ()


@dataclass
class EnsembleModel:
    members: list[ModelParams]
    config: TrainConfig

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        shapes = self.members[0].shapes()
        if any(m.shapes() != shapes for m in self.members[1:]):
            raise ValueError("ensemble members differ in shape")

    @property
    def encoder(self) -> EncoderConfig:
        return self.config.encoder


def encode_dataset(data: Dataset, config: TrainConfig):
    """``(ids, mask, cwd_labels, li_labels)``; labels are ``None`` when absent."""
    ids, mask = encode_batch([s.text for s in data], config.encoder)
    cwd = None
    if data.labeled:
        cwd = np.array([s.label for s in data], dtype=np.int64)
    lang_index = {l: i for i, l in enumerate(config.languages)}
    try:
        li = np.array([lang_index[s.language] for s in data], dtype=np.int64)
    except KeyError as e:
        raise DatasetError(f"language {e.args[0]!r} not in configured languages") from None
    return ids, mask, cwd, li



def train_single(train_data: Dataset, config: TrainConfig,
                 alpha_config: JointLossConfig | None = None, member: int = 0,
                 history: list | None = None, dev_data: Dataset | None = None) -> ModelParams:
    """Train one model for ``config.epochs`` passes of shuffled mini-batches.

    Each epoch reshuffles with SplitMix64 seeded from the member's data seed
    and the epoch number.  When ``history`` is a list, one dict per step (and
    one per epoch with dev MAP, when ``dev_data`` is given) is appended.
    """
    if len(train_data) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if not train_data.labeled:
        raise TrainingError("training data must be labeled")
    ids, mask, y_cwd, y_li = encode_dataset(train_data, config)
    if alpha_config is None:
        cw = inverse_frequency_weights(y_cwd, 2) if config.class_weighting else None
        alpha_config = JointLossConfig(config.alpha, cwd_weights=cw)

    data_seed, init_seed = config.member_seeds(member)
    params = init_params(config.encoder.hash_vocab_size, len(config.languages),
                         config.embed_dim, config.hidden, seed=init_seed)
    state = AdamWState.for_params(params, lr=config.lr, beta1=config.beta1,
                                  beta2=config.beta2, eps=config.eps,
                                  weight_decay=config.weight_decay)
    n, b = len(train_data), config.batch_size
    step = 0
    for epoch in range(config.epochs):
        order = np.array(SplitMix64(derive_seed(data_seed, epoch)).shuffle(list(range(n))))
        for start in range(0, n, b):
            idx = order[start:start + b]
            trace = forward(params, ids[idx], mask[idx])
            loss = losses(trace, y_cwd[idx], y_li[idx], alpha_config)
            step += 1
            if not math.isfinite(loss["joint"]):
                raise TrainingError(f"non-finite loss at step {step} (member {member})")
            grads = backward(trace, y_cwd[idx], y_li[idx], alpha_config, params)
            try:
                adamw_step(params, grads, state)
            except NonFiniteError as e:
                raise TrainingError(f"step {step} (member {member}): {e}") from e
            if history is not None:
                history.append({"member": member, "epoch": epoch + 1, "step": step, **loss})
        if dev_data is not None and history is not None:
            report = evaluate_model(EnsembleModel([params], config), dev_data)
            history.append({"member": member, "epoch": epoch + 1, "dev_map": report.map})
    log.info("member %d: %d steps over %d samples", member, step, n)
    return params


def member_training_sets(train_data: Dataset, config: TrainConfig) -> list[Dataset]:
    """Training set of each ensemble member (hold-out chunk ``i`` for member ``i``)."""
    if config.k == 1:
        return [train_data]
    chunks = split_chunks(train_data, config.k, config.data_seed)
    if config.chunk_mode == "single_chunk":
        return chunks
    out = []
    for i in range(config.k):
        picked = [s for j, c in enumerate(chunks) if j != i for s in c]
        out.append(Dataset(tuple(picked), train_data.split, train_data.provenance))
    return out


def train_ensemble(train_data: Dataset, config: TrainConfig, history: list | None = None,
                   dev_data: Dataset | None = None) -> EnsembleModel:
    if len(train_data) < config.k:
        raise DatasetError(f"need at least k={config.k} samples, got {len(train_data)}")
    members = [train_single(part, config, member=i, history=history, dev_data=dev_data)
               for i, part in enumerate(member_training_sets(train_data, config))]
    return EnsembleModel(members, config)


def member_probabilities(model: EnsembleModel, ids, mask) -> np.ndarray:
    """(k, n) positive-class probabilities, one row per member."""
    n = ids.shape[0]
    out = np.zeros((len(model.members), n))
    for j, params in enumerate(model.members):
        for start in range(0, n, PREDICT_BATCH):
            sl = slice(start, start + PREDICT_BATCH)
            out[j, sl] = forward(params, ids[sl], mask[sl]).probs("cwd")[:, 1]
    return out


def running_mean(rows: np.ndarray) -> np.ndarray:
    """Column means by incremental update, exact when all rows are equal."""
    mean = rows[0].copy()
    for i in range(1, rows.shape[0]):
        mean += (rows[i] - mean) / (i + 1)
    return mean


def predict(model: EnsembleModel, data: Dataset) -> list[Prediction]:
    if len(data) == 0:
        return []
    ids, mask = encode_batch([s.text for s in data], model.encoder)
    per_member = member_probabilities(model, ids, mask)
    fused = running_mean(per_member)
    return [Prediction(s.id, float(fused[i]), s.topic_id,
                       tuple(float(x) for x in per_member[:, i]))
            for i, s in enumerate(data)]


def gold_labels(data: Dataset) -> dict[str, int]:
    if not data.labeled:
        raise DatasetError("evaluation data must be labeled")
    return {s.id: s.label for s in data}


def evaluate_model(model: EnsembleModel, data: Dataset) -> metrics.MetricsReport:
    return metrics.evaluate(predict(model, data), gold_labels(data))


def evaluate_by_language(predictions: Sequence[Prediction],
                         data: Dataset) -> dict[str, metrics.MetricsReport]:
    """One report per language present in ``data``, ranking each language separately."""
    scores = {p.sample_id: p.score for p in predictions}
    out = {}
    for lang in sorted({s.language for s in data}):
        part = [s for s in data if s.language == lang]
        out[lang] = metrics.evaluate({s.id: scores[s.id] for s in part if s.id in scores},
                                     {s.id: s.label for s in part})
    return out


@dataclass
class SweepRow:
    alpha: float
    report: metrics.MetricsReport
    seeds: tuple[int, int]
    per_language: dict = field(default_factory=dict)


@dataclass
class SweepResult:
    rows: list[SweepRow]

    @property
    def best_alpha(self) -> float | None:
        """Alpha with the highest MAP; the first one wins ties."""
        defined = [r for r in self.rows if r.report.map is not None]
        if not defined:
            return None
        return max(defined, key=lambda r: r.report.map).alpha

    def to_tsv(self) -> str:
        lines = ["alpha\t" + "\t".join(metrics.REPORT_COLUMNS)]
        lines += [f"{r.alpha:g}\t{r.report.tsv_row()}" for r in self.rows]
        return "\n".join(lines) + "\n"


DEFAULT_ALPHAS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def alpha_sweep(train_data: Dataset, dev_data: Dataset, config: TrainConfig,
                alphas: Sequence[float] = DEFAULT_ALPHAS,
                on_row: Callable[[SweepRow], None] | None = None) -> SweepResult:
    """Train and evaluate one ensemble per alpha; everything else stays fixed."""
    if not alphas:
        raise ValueError("alpha grid is empty")
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha {a} outside [0, 1]")
    gold = gold_labels(dev_data)
    rows = []
    for a in alphas:
        cfg = replace(config, alpha=float(a))
        model = train_ensemble(train_data, cfg)
        preds = predict(model, dev_data)
        row = SweepRow(float(a), metrics.evaluate(preds, gold),
                       (cfg.data_seed, cfg.init_seed),
                       evaluate_by_language(preds, dev_data))
        log.info("alpha=%g MAP=%s", a, row.report.map)
        rows.append(row)
        if on_row:
            on_row(row)
    return SweepResult(rows)


# Model file layout (all integers little-endian):
#   magic "CWJMODEL" | u32 version | u64 header length | header JSON (UTF-8)
#   | member arrays as f8 row-major, in header "manifest" order
#   | SHA-256 over everything before it
MAGIC = b"CWJMODEL"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def model_bytes(model: EnsembleModel) -> bytes:
    manifest = [[name, list(arr.shape)] for name, arr in model.members[0].items()]
    header = json.dumps({"config": model.config.to_dict(), "members": len(model.members),
                         "manifest": manifest}, sort_keys=True).encode("utf-8")
    parts = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)), header]
    for params in model.members:
        for _, arr in params.items():
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_model(model: EnsembleModel, path) -> str:
    """Write the model file and return its SHA-256 hex digest."""
    data = model_bytes(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def model_from_bytes(data: bytes) -> EnsembleModel:
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"not a model file: missing magic bytes {MAGIC!r}")
    if len(data) < _PREFIX.size + 32:
        raise ModelFormatError("truncated model file")
    _, version, header_len = _PREFIX.unpack_from(data)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} "
                               f"(expected {FORMAT_VERSION})")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("checksum mismatch: model file is corrupted or truncated")
    start = _PREFIX.size
    header = json.loads(body[start:start + header_len].decode("utf-8"))
    offset = start + header_len
    members = []
    for _ in range(header["members"]):
        arrays = {}
        for name, shape in header["manifest"]:
            count = int(np.prod(shape)) if shape else 1
            nbytes = 8 * count
            if offset + nbytes > len(body):
                raise ModelFormatError("truncated model file")
            arrays[name] = np.frombuffer(body, dtype="<f8", count=count,
                                         offset=offset).reshape(shape).astype(np.float64)
            offset += nbytes
        members.append(ModelParams(**arrays))
    if offset != len(body):
        raise ModelFormatError("trailing bytes after member arrays")
    return EnsembleModel(members, TrainConfig.from_dict(header["config"]))


def load_model(path) -> EnsembleModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def format_predictions(predictions: Sequence[Prediction], run_id: str) -> str:
    return "".join(f"{p.topic_id}\t{p.sample_id}\t{p.score!r}\t{run_id}\n" for p in predictions)


def parse_predictions(text: str) -> list[Prediction]:
    """Inverse of :func:`format_predictions`; ``#`` lines are skipped."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise ValueError(f"line {lineno}: expected topic, id, score[, run]")
        try:
            score = float(fields[2])
        except ValueError:
            raise ValueError(f"line {lineno}: bad score {fields[2]!r}") from None
        out.append(Prediction(fields[1], score, fields[0]))
    return out
