"""Vocabulary types, vocabulary set algebra, and heuristic configuration.

Token ids are plain non-negative ints indexing into a Vocabulary. All types
here are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from tokengraft.errors import ConfigError, InvariantError

TokenId = int


class Vocabulary:
    """Ordered token-string vocabulary with a string -> id index.

    `entries[i]` is the token string for id i; `index` is the exact inverse.
    Token strings are compared as raw byte strings: no Unicode normalization,
    no case folding, no whitespace-marker translation.
    """

    __slots__ = ("entries", "index", "specials")

    def __init__(self, entries: list[str], specials: set[str] | None = None):
        specials = set(specials or ())
        index: dict[str, TokenId] = {}
        for i, tok in enumerate(entries):
            if tok in index:
                raise InvariantError(f"duplicate token string {tok!r} at ids {index[tok]} and {i}")
            index[tok] = i
        missing = specials - index.keys()
        if missing:
            raise InvariantError(f"special tokens not present in vocabulary: {sorted(missing)!r}")
        self.entries: tuple[str, ...] = tuple(entries)
        self.index: dict[str, TokenId] = index
        self.specials: frozenset[str] = frozenset(specials)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.entries == other.entries and self.specials == other.specials

    def token(self, token_id: TokenId) -> str:
        if not 0 <= token_id < len(self.entries):
            raise ConfigError(f"token id {token_id} out of range for vocabulary of size {len(self.entries)}")
        return self.entries[token_id]

    def token_set(self) -> frozenset[str]:
        return frozenset(self.entries)


@dataclass(frozen=True)
class VocabPartition:
    """Split of a new vocabulary into tokens shared with the old one and the rest."""

    shared: frozenset[str]
    unique: frozenset[str]

    def __post_init__(self) -> None:
        if self.shared & self.unique:
            raise InvariantError("shared and unique token sets overlap")


def partition_vocab(old: Vocabulary, new: Vocabulary) -> VocabPartition:
    """Partition the new vocabulary by exact string membership in the old one.

    Matching is exact byte-string equality of the raw token strings; differing
    whitespace-marker conventions intentionally land in `unique`.
    """
    old_set = old.token_set()
    new_set = new.token_set()
    shared = new_set & old_set
    return VocabPartition(shared=frozenset(shared), unique=frozenset(new_set - shared))


@dataclass(frozen=True)
class HeuristicConfig:
    """Hyperparameters controlling unique-token embedding synthesis.

    temperature: softmax temperature for both the compositional and the
        neighbor weighting (must be > 0).
    k_neighbors: how many nearest old-vocabulary neighbors to retrieve.
    global_weight: blend factor in [0, 1]; 0 keeps only the compositional
        estimate, 1 keeps only the neighborhood estimate.
    similarity_threshold: optional minimum cosine similarity; neighbors
        scoring below it are dropped before the softmax. None disables
        filtering (a threshold of -1 is equivalent to None).
    seed: RNG seed for random-fallback rows.
    """

    temperature: float = 0.6
    k_neighbors: int = 10
    global_weight: float = 0.3
    similarity_threshold: float | None = None
    seed: int = 0
    length_in_bytes: bool = field(default=False)

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if not 0.0 <= self.global_weight <= 1.0:
            raise ConfigError(f"global_weight must be in [0, 1], got {self.global_weight}")
        if self.similarity_threshold is not None and not -1.0 <= self.similarity_threshold <= 1.0:
            raise ConfigError(
                f"similarity_threshold must be in [-1, 1], got {self.similarity_threshold}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
