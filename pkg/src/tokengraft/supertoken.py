"""Supertoken tokenizer training via stochastic chunk augmentation.

Each training document is rebuilt as a sequence of chunks joined by a
sentinel separator. Training splits on the separator (removing it) before
byte-level mapping and never splits inside a chunk, so merges may cross
word boundaries within a chunk but never across chunk edges. The learned
vocabulary therefore contains multi-word "supertokens".
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Iterable

from tokengraft.bpe import _WORD_RE, BpeTokenizer, train_bpe
from tokengraft.errors import ConfigError

DEFAULT_SEPARATOR = ""  # private-use codepoint; stripped from inputs
DEFAULT_CHUNK_DIST = {1: 0.40, 2: 0.30, 3: 0.20, 4: 0.10}


@dataclass(frozen=True)
class ChunkLengthDistribution:
    """Discrete distribution over chunk sizes (whole words by default)."""

    support: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.support:
            raise ConfigError("chunk length distribution is empty")
        if len(self.support) != len(self.probs):
            raise ConfigError("support and probs must have equal length")
        if len(set(self.support)) != len(self.support):
            raise ConfigError("chunk sizes must be distinct")
        if any(s < 1 for s in self.support):
            raise ConfigError("chunk sizes must be positive integers")
        if any(p < 0 for p in self.probs):
            raise ConfigError("probabilities must be non-negative")
        total = sum(self.probs)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"probabilities must sum to 1, got {total}")

    @classmethod
    def from_mapping(cls, dist: dict[int, float]) -> "ChunkLengthDistribution":
        items = sorted(dist.items())
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items))


@dataclass(frozen=True)
class SupertokenConfig:
    dist: ChunkLengthDistribution = field(
        default_factory=lambda: ChunkLengthDistribution.from_mapping(DEFAULT_CHUNK_DIST)
    )
    separator: str = DEFAULT_SEPARATOR
    vocab_size: int = 32000
    specials: tuple[str, ...] = ()
    seed: int = 0
    chunk_unit: str = "words"  # or "chars"

    def __post_init__(self) -> None:
        if not self.separator:
            raise ConfigError("separator must be a non-empty string")
        if self.chunk_unit not in ("words", "chars"):
            raise ConfigError(f"chunk_unit must be 'words' or 'chars', got {self.chunk_unit!r}")


def generate_chunk_lengths(
    word_count: int, dist: ChunkLengthDistribution, rng: random.Random
) -> list[int]:
    """Draw i.i.d. chunk lengths until they cover word_count; clamp the last.

    The returned lengths always sum exactly to word_count.
    """
    if word_count < 1:
        raise ConfigError(f"word_count must be >= 1, got {word_count}")
    lengths: list[int] = []
    remaining = word_count
    support, probs = dist.support, dist.probs
    while remaining > 0:
        draw = rng.choices(support, weights=probs, k=1)[0]
        lengths.append(min(draw, remaining))
        remaining -= lengths[-1]
    return lengths


def split_words(text: str) -> list[str]:
    """Whitespace words with leading whitespace attached; trailing whitespace
    sticks to the last word so the concatenation reproduces the input."""
    parts = _WORD_RE.findall(text)
    if not parts:
        return []
    consumed = sum(len(p) for p in parts)
    if consumed < len(text):
        parts[-1] += text[consumed:]
    return parts


def doc_rng(seed: int, doc_index: int) -> random.Random:
    """Per-document RNG stream; stable across runs, platforms, and scheduling."""
    digest = hashlib.blake2b(f"{seed}:{doc_index}".encode(), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "little"))


def augment_document(text: str, cfg: SupertokenConfig, rng: random.Random) -> str:
    """Rebuild one document as separator-joined stochastic chunks.

    Any pre-existing separator occurrences are stripped first, so removing
    every separator from the output reproduces the original word sequence.
    """
    text = text.replace(cfg.separator, "")
    if cfg.chunk_unit == "chars":
        units: list[str] = list(text)
    else:
        units = split_words(text)
    if not units:
        return text
    lengths = generate_chunk_lengths(len(units), cfg.dist, rng)
    chunks: list[str] = []
    pos = 0
    for length in lengths:
        chunks.append("".join(units[pos : pos + length]))
        pos += length
    return cfg.separator.join(chunks)


def train_supertokenizer(corpus: Iterable[str], cfg: SupertokenConfig) -> BpeTokenizer:
    """Train BPE over chunk-augmented documents.

    Pre-tokenization splits on the separator (removing it); each chunk is a
    single unit for pair statistics, so whitespace-crossing merges are
    allowed inside chunks and impossible across them.
    """
    separator = cfg.separator

    def augmented() -> Iterable[str]:
        for doc_index, doc in enumerate(corpus):
            yield augment_document(doc, cfg, doc_rng(cfg.seed, doc_index))

    def split_on_separator(text: str) -> list[str]:
        return [chunk for chunk in text.split(separator) if chunk]

    return train_bpe(
        augmented(),
        vocab_size=cfg.vocab_size,
        specials=list(cfg.specials),
        pre_tokenizer=split_on_separator,
    )
