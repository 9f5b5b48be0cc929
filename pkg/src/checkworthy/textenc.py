"""Text normalization and hashed fixed-length token encoding.

Every post becomes a window of ``MAX_TOKENS`` integer ids.  Tokens are
whitespace words followed by the character n-grams of each word; each token
is mapped into ``[1, V)`` with a keyed 64-bit BLAKE2b hash, and id 0 is
reserved for padding.
"""
from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

MAX_TOKENS = 128
PAD_ID = 0
EMPTY_TOKEN = "<empty>"
URL_TOKEN = "<url>"
USER_TOKEN = "<user>"

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class EncoderConfig:
    hash_vocab_size: int = 32768
    hash_seed: int = 0
    char_ngram_orders: tuple[int, ...] = (3,)
    lowercase: bool = True
    replace_urls: bool = True
    replace_mentions: bool = True

    def __post_init__(self):
        v = self.hash_vocab_size
        if v < 2 or v & (v - 1):
            raise ValueError(f"hash_vocab_size must be a power of two >= 2, got {v}")
        if not 0 <= self.hash_seed < 2**64:
            raise ValueError("hash_seed must fit in 64 unsigned bits")
        orders = tuple(sorted(set(int(n) for n in self.char_ngram_orders)))
        if any(n < 2 for n in orders):
            raise ValueError(f"n-gram orders must be >= 2, got {orders}")
        object.__setattr__(self, "char_ngram_orders", orders)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["char_ngram_orders"] = list(self.char_ngram_orders)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        d["char_ngram_orders"] = tuple(d.get("char_ngram_orders", (3,)))
        return cls(**d)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    real_length: int = 0


def normalize(text: str, lowercase: bool = True, replace_urls: bool = True,
              replace_mentions: bool = True) -> str:
    text = unicodedata.normalize("NFC", text)
    if replace_urls:
        text = _URL_RE.sub(URL_TOKEN, text)
    if replace_mentions:
        text = _MENTION_RE.sub(USER_TOKEN, text)
    if lowercase:
        # placeholders are already lowercase, so order is irrelevant here
        text = text.lower()
    return _WS_RE.sub(" ", text).strip()


def normalize_with(text: str, config: EncoderConfig) -> str:
    return normalize(text, config.lowercase, config.replace_urls, config.replace_mentions)


def char_ngrams(word: str, n: int) -> list[str]:
    """Character n-grams of ``word`` wrapped in ``<``/``>`` boundary marks.

    Words shorter than the order yield the single wrapped word, so every
    order contributes at least one token per word.
    """
    wrapped = f"<{word}>"
    if len(wrapped) <= n:
        return [wrapped]
    return [wrapped[i:i + n] for i in range(len(wrapped) - n + 1)]


def token_strings(text: str, config: EncoderConfig) -> list[str]:
    """Token stream for already-normalized ``text`` (untruncated)."""
    words = text.split()
    if not words:
        return [EMPTY_TOKEN]
    out = []
    for w in words:
        out.append(w)
        # "#" keeps n-grams from sharing a hash with an identical whole word
        for n in config.char_ngram_orders:
            out.extend("#" + g for g in char_ngrams(w, n))
    return out


@lru_cache(maxsize=1 << 18)
def hash_token(token: str, seed: int, vocab_size: int) -> int:
    """Keyed BLAKE2b-64 of the UTF-8 token, reduced modulo ``vocab_size``.

    The key is the seed as 8 little-endian bytes; the digest is read as a
    little-endian unsigned integer.  A reduced value of 0 maps to 1.
    """
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                             key=seed.to_bytes(8, "little")).digest()
    h = int.from_bytes(digest, "little") % vocab_size
    return h or 1


def tokenize(text: str, config: EncoderConfig) -> TokenSequence:
    toks = token_strings(text, config)[:MAX_TOKENS]
    ids = np.zeros(MAX_TOKENS, dtype=np.int64)
    ids[:len(toks)] = [hash_token(t, config.hash_seed, config.hash_vocab_size) for t in toks]
    mask = np.zeros(MAX_TOKENS, dtype=bool)
    mask[:len(toks)] = True
    return TokenSequence(ids=ids, mask=mask, real_length=len(toks))


def encode(text: str, config: EncoderConfig) -> TokenSequence:
    """Normalize then tokenize raw text."""
    return tokenize(normalize_with(text, config), config)


def encode_batch(texts, config: EncoderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stack encodings of raw texts into ``(ids, mask)`` arrays of shape (n, 128)."""
    n = len(texts)
    ids = np.zeros((n, MAX_TOKENS), dtype=np.int64)
    mask = np.zeros((n, MAX_TOKENS), dtype=bool)
    for i, t in enumerate(texts):
        seq = encode(t, config)
        ids[i] = seq.ids
        mask[i] = seq.mask
    return ids, mask


def stack(seqs) -> tuple[np.ndarray, np.ndarray]:
    seqs = list(seqs)
    if any(len(s.ids) != MAX_TOKENS for s in seqs):
        raise ValueError(f"all sequences must have length {MAX_TOKENS}")
    return (np.stack([s.ids for s in seqs]).astype(np.int64),
            np.stack([s.mask for s in seqs]).astype(bool))
