"""CLEF CheckThat!-style TSV ingestion, merging, chunking and class statistics."""
from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

LANGUAGES = ("en", "tr", "bg", "ar", "es")
LANGUAGE_NAMES = {"en": "English", "tr": "Turkish", "bg": "Bulgarian",
                  "ar": "Arabic", "es": "Spanish"}
SPLITS = ("train", "dev", "test")

_MASK64 = (1 << 64) - 1


class DatasetError(ValueError):
    pass


class SplitMix64:
    """Steele/Lea/Flood SplitMix64 generator (64-bit state, Weyl increment).

    Used wherever sample order must be reproducible independently of numpy
    or Python ``random`` versions.
    """

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + self.GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Integer in [0, n) by rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle in place, walking from the last position down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items


def derive_seed(base: int, *tags: int) -> int:
    """Deterministic child seed from a base seed and integer tags."""
    state = base & _MASK64
    for t in tags:
        state = SplitMix64(state ^ ((t * SplitMix64.GAMMA) & _MASK64)).next()
    return state


@dataclass(frozen=True)
class Sample:
    id: str
    text: str
    language: str
    label: int | None = None
    topic_id: str = ""

    def __post_init__(self):
        if not self.id:
            raise DatasetError("sample id must be non-empty")
        if self.language not in LANGUAGES:
            raise DatasetError(f"unknown language tag {self.language!r}")
        if self.label not in (None, 0, 1):
            raise DatasetError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...] = ()
    split: str | None = None
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        dup = [k for k, c in Counter(s.id for s in self.samples).items() if c > 1]
        if dup:
            raise DatasetError(f"duplicate sample ids in dataset: {sorted(dup)[:5]}")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    @property
    def labeled(self) -> bool:
        return all(s.label is not None for s in self.samples)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.samples[i] for i in indices), self.split, self.provenance)


@dataclass(frozen=True)
class Schema:
    """Column names of a task TSV file.  ``topic_column`` is optional in the file."""
    id_column: str = "tweet_id"
    text_column: str = "tweet_text"
    label_column: str = "check_worthiness"
    topic_column: str = "topic_id"


def _parse_label(raw: str, where: str) -> int:
    v = raw.strip()
    if v not in ("0", "1"):
        raise DatasetError(f"{where}: label must be 0 or 1, got {raw!r}")
    return int(v)


def load_dataset(path, language: str, split: str, schema: Schema = Schema(),
                 labeled: bool | None = True) -> Dataset:
    """Read one language's TSV file.

    Fields are split on tab with no quoting.  Errors carry ``path:line``.
    Rows whose text is blank after whitespace stripping are rejected.
    ``labeled=None`` reads labels only if the label column is present.
    """
    path = os.fspath(path)
    if language not in LANGUAGES:
        raise DatasetError(f"unknown language tag {language!r}")
    if split not in SPLITS:
        raise DatasetError(f"unknown split tag {split!r}")
    if not os.path.isfile(path):
        raise DatasetError(f"{path}: no such file")

    with open(path, encoding="utf-8", newline="\n") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetError(f"{path}:1: missing header row")

    header = [h.strip() for h in lines[0].rstrip("\r").split("\t")]
    if labeled is None:
        labeled = schema.label_column in header
    required = [schema.id_column, schema.text_column] + ([schema.label_column] if labeled else [])
    for col in required:
        if col not in header:
            raise DatasetError(f"{path}:1: missing column {col!r} (header: {header})")
    i_id = header.index(schema.id_column)
    i_text = header.index(schema.text_column)
    i_label = header.index(schema.label_column) if labeled else None
    i_topic = header.index(schema.topic_column) if schema.topic_column in header else None

    samples, seen = [], {}
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        where = f"{path}:{lineno}"
        if len(fields) < len(header):
            raise DatasetError(f"{where}: expected {len(header)} fields, got {len(fields)}")
        sid = fields[i_id].strip()
        if not sid:
            raise DatasetError(f"{where}: empty id")
        if sid in seen:
            raise DatasetError(f"{where}: duplicate id {sid!r} (first seen on line {seen[sid]})")
        seen[sid] = lineno
        text = fields[i_text]
        if not text.strip():
            raise DatasetError(f"{where}: empty text")
        label = _parse_label(fields[i_label], where) if i_label is not None else None
        topic = fields[i_topic].strip() if i_topic is not None else ""
        samples.append(Sample(sid, text, language, label, topic))
    log.debug("loaded %d samples from %s", len(samples), path)
    return Dataset(tuple(samples), split, (path,))


def merge(datasets: Sequence[Dataset]) -> Dataset:
    """Concatenate datasets of one split in argument order.

    Ids that occur in more than one input are rewritten as
    ``"<language>:<id>"`` for every occurrence.
    """
    datasets = list(datasets)
    if not datasets:
        return Dataset()
    splits = {d.split for d in datasets if len(d) or d.split is not None}
    splits.discard(None)
    if len(splits) > 1:
        raise DatasetError(f"cannot merge different splits: {sorted(splits)}")
    counts = Counter(s.id for d in datasets for s in d)
    out = []
    for d in datasets:
        for s in d:
            if counts[s.id] > 1:
                s = Sample(f"{s.language}:{s.id}", s.text, s.language, s.label, s.topic_id)
            out.append(s)
    provenance = tuple(p for d in datasets for p in d.provenance)
    return Dataset(tuple(out), splits.pop() if splits else None, provenance)


def chunk_sizes(n: int, k: int) -> list[int]:
    q, r = divmod(n, k)
    return [q + 1] * r + [q] * (k - r)


def split_chunks(dataset: Dataset, k: int, seed: int) -> list[Dataset]:
    """Shuffle indices with SplitMix64(seed) and slice into ``k`` chunks.

    Larger chunks come first; within a chunk samples keep file order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(dataset)
    if k > n:
        raise DatasetError(f"cannot split {n} samples into {k} chunks")
    order = SplitMix64(seed).shuffle(list(range(n)))
    chunks, start = [], 0
    for size in chunk_sizes(n, k):
        chunks.append(dataset.subset(sorted(order[start:start + size])))
        start += size
    return chunks


@dataclass
class DatasetStats:
    """Per-(language, split) positive/negative counts and mean whitespace tokens."""
    positives: dict = field(default_factory=dict)
    negatives: dict = field(default_factory=dict)
    avg_tokens: dict = field(default_factory=dict)

    def total(self, language: str, split: str) -> int:
        return self.positives[language, split] + self.negatives[language, split]

    def to_tsv(self) -> str:
        langs = [l for l in LANGUAGES if any(k[0] == l for k in self.positives)]
        splits = [s for s in SPLITS if any(k[1] == s for k in self.positives)]
        rows = ["Properties\t" + "\t".join(LANGUAGE_NAMES[l] for l in langs)]

        def cell(table, l, s, fmt):
            return fmt(table[l, s]) if (l, s) in table else "-"

        for name, table, fmt in (("Pos-Class", self.positives, str),
                                 ("Neg-Class", self.negatives, str)):
            for s in splits:
                rows.append(f"{name} ({s.capitalize()})\t"
                            + "\t".join(cell(table, l, s, fmt) for l in langs))
        for s in splits:
            rows.append(f"Avg. Tokens ({s.capitalize()})\t"
                        + "\t".join(cell(self.avg_tokens, l, s, lambda v: f"{v:.2f}")
                                    for l in langs))
        return "\n".join(rows) + "\n"


def whitespace_tokens(text: str) -> int:
    return len(text.split())


def compute_stats(datasets: Mapping[tuple[str, str], Dataset]) -> DatasetStats:
    """``datasets`` maps ``(language, split)`` to a labeled Dataset."""
    stats = DatasetStats()
    for (lang, split), ds in datasets.items():
        if not ds.labeled:
            raise DatasetError(f"dataset {lang}/{split} is unlabeled")
        pos = sum(1 for s in ds if s.label == 1)
        stats.positives[lang, split] = pos
        stats.negatives[lang, split] = len(ds) - pos
        if len(ds):
            stats.avg_tokens[lang, split] = sum(whitespace_tokens(s.text) for s in ds) / len(ds)
    return stats
