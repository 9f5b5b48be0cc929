"""Constructed corpora for smoke runs and tests.

``toy_corpus`` builds a multilingual set whose label is decided by the
presence of class marker words, so a bag-of-hashed-tokens model can separate
it perfectly.  ``write_clef_files`` writes CheckThat!-shaped TSV files with
prescribed class counts and mean token lengths.
"""
from __future__ import annotations

import os

import numpy as np

from .corpus import LANGUAGE_NAMES, Dataset, Sample

_ALPHABETS = {
    "en": "abcdefghijklmnop",
    "tr": "çğışöüabcdefghkl",
    "bg": "абвгдежзийклмноп",
    "ar": "ابتثجحخدذرزسشصضط",
    "es": "áéíñóúbcdfglmnrs",
}

HEADER = "topic_id\ttweet_id\ttweet_url\ttweet_text\tclaim\tcheck_worthiness"


def _words(rng, alphabet: str, count: int, length=(4, 8)) -> list[str]:
    out = set()
    while len(out) < count:
        n = int(rng.integers(*length))
        out.add("".join(rng.choice(list(alphabet), size=n)))
    return sorted(out)


def toy_corpus(n: int, languages=("en", "es"), seed: int = 0, split: str = "train",
               pos_rate: float = 0.3, length: int = 8, id_prefix: str = "") -> Dataset:
    """Separable corpus: positives carry a positive marker word, negatives a negative one.

    Vocabularies depend only on the language (not on ``seed``), so corpora
    drawn with different seeds share markers and filler words.
    """
    vocab_rng = np.random.default_rng(12345)
    vocab = {}
    for lang in languages:
        words = _words(vocab_rng, _ALPHABETS[lang], 60)
        vocab[lang] = {"filler": words[:50], "pos": words[50:55], "neg": words[55:60]}
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        lang = languages[i % len(languages)]
        label = int(rng.random() < pos_rate)
        v = vocab[lang]
        toks = list(rng.choice(v["filler"], size=length - 1))
        marker = rng.choice(v["pos"] if label else v["neg"])
        toks.insert(int(rng.integers(0, length)), marker)
        samples.append(Sample(f"{id_prefix}{split}{i:05d}", " ".join(toks), lang, label))
    return Dataset(tuple(samples), split)


def write_clef_files(directory, counts: dict, avg_tokens: dict | None = None,
                     seed: int = 0) -> list[str]:
    """Write ``dataset_<split>_<language>.tsv`` files.

    ``counts`` maps ``(language, split)`` to ``(positives, negatives)``;
    ``avg_tokens`` optionally maps the same keys to a target mean number of
    whitespace tokens per text, met to within rounding of the total.
    """
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for (lang, split), (pos, neg) in sorted(counts.items()):
        n = pos + neg
        labels = np.array([1] * pos + [0] * neg)
        rng.shuffle(labels)
        mean = (avg_tokens or {}).get((lang, split), 20.0)
        total = int(round(mean * n))
        lengths = np.full(n, max(1, total // n)) if n else np.zeros(0, dtype=int)
        lengths[:max(0, total - int(lengths.sum()))] += 1
        filler = _words(rng, _ALPHABETS[lang], 200)
        name = LANGUAGE_NAMES[lang].lower()
        path = os.path.join(directory, f"dataset_{split}_{name}.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(HEADER + "\n")
            for i in range(n):
                text = " ".join(rng.choice(filler, size=int(lengths[i])))
                tid = f"{lang}{split}{i:06d}"
                fh.write(f"covid-19\t{tid}\thttp://twitter.com/i/{tid}\t{text}\t{labels[i]}\t{labels[i]}\n")
        paths.append(path)
    return paths


def write_tsv(data: Dataset, path) -> str:
    """Write ``data`` in the same column layout as ``write_clef_files``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        for s in data:
            lab = "" if s.label is None else s.label
            fh.write(f"{s.topic_id or 'covid-19'}\t{s.id}\t\t{s.text}\t{lab}\t{lab}\n")
    return str(path)
