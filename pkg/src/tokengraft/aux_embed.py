"""Auxiliary semantic space: file-backed unit-vector store plus exact kNN.

The store maps token strings to unit-normalized f32 vectors loaded from an
AUXV1 file (see save_store for the byte layout). The index does brute-force
cosine search over the old vocabulary; at the vocabulary sizes this toolkit
targets, one matrix-vector product per query beats the correctness risk of
an approximate index.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from tokengraft.bpe import BpeTokenizer
from tokengraft.errors import AuxStoreFormatError, ConfigError
from tokengraft.vocab import TokenId, Vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"AUXV1\x00"


@dataclass
class AuxEmbeddingStore:
    """Unit-normalized f32 vectors keyed by token string."""

    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    duplicates: int = 0

    def embed(self, text: str) -> np.ndarray | None:
        """Exact-match lookup; returns None for unknown keys."""
        return self.vectors.get(text)


def _unit(vec: np.ndarray, key: str) -> np.ndarray:
    v = vec.astype(np.float64)
    norm = float(np.sqrt(np.dot(v, v)))
    if not np.isfinite(norm) or norm == 0.0:
        raise AuxStoreFormatError(f"vector for key {key!r} has non-normalizable norm {norm}")
    return (v / norm).astype(np.float32)


def load_store(path: str, expected_dim: int | None = None) -> AuxEmbeddingStore:
    """Read an AUXV1 file; vectors are re-normalized to unit L2 on load.

    Duplicate keys: last record wins, counted in `duplicates` and logged.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(MAGIC) + 4 + 8:
        raise AuxStoreFormatError(f"{path}: truncated header ({len(data)} bytes)")
    if data[: len(MAGIC)] != MAGIC:
        raise AuxStoreFormatError(f"{path}: bad magic {data[:6]!r}")
    pos = len(MAGIC)
    (dim,) = struct.unpack_from("<I", data, pos)
    pos += 4
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if dim < 1:
        raise AuxStoreFormatError(f"{path}: dimension must be positive, got {dim}")
    if expected_dim is not None and dim != expected_dim:
        raise AuxStoreFormatError(f"{path}: dimension mismatch: file has {dim}, expected {expected_dim}")

    store = AuxEmbeddingStore(dim=dim)
    vec_bytes = dim * 4
    for i in range(count):
        if pos + 4 > len(data):
            raise AuxStoreFormatError(f"{path}: truncated at record {i} (key length)")
        (key_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + key_len + vec_bytes > len(data):
            raise AuxStoreFormatError(f"{path}: truncated at record {i}")
        try:
            key = data[pos : pos + key_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise AuxStoreFormatError(f"{path}: record {i} key is not valid UTF-8") from exc
        pos += key_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
        pos += vec_bytes
        if key in store.vectors:
            store.duplicates += 1
        store.vectors[key] = _unit(vec, key)
    if store.duplicates:
        logger.warning("%s: %d duplicate keys, kept the last occurrence of each", path, store.duplicates)
    return store


def save_store(store: AuxEmbeddingStore, path: str) -> None:
    """Write AUXV1: magic, u32 dim, u64 count, then [u32 key_len][key][dim f32] records."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", store.dim))
        f.write(struct.pack("<Q", len(store.vectors)))
        for key, vec in store.vectors.items():
            raw = key.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def embed(store: AuxEmbeddingStore, text: str) -> np.ndarray | None:
    return store.embed(text)


class PseudoEmbedder:
    """Deterministic hash-derived unit vectors. NOT semantic.

    Exists so pipeline tests and fixtures can run without a real embedding
    model; similarities between pseudo vectors carry no meaning.
    """

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise ConfigError(f"dimension must be positive, got {dim}")
        self.dim = dim
        self.seed = seed

    def __call__(self, text: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x00{text}".encode(), digest_size=16).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(self.dim)
        return (vec / np.sqrt(np.dot(vec, vec))).astype(np.float32)


def pseudo_store(keys: list[str], dim: int, seed: int = 0) -> AuxEmbeddingStore:
    """Build a store of pseudo embeddings for the given keys (tests/fixtures only)."""
    embedder = PseudoEmbedder(dim, seed)
    store = AuxEmbeddingStore(dim=dim)
    for key in keys:
        store.vectors[key] = embedder(key)
    return store


class KnnIndex:
    """Immutable brute-force cosine index over a subset of old-vocabulary tokens."""

    def __init__(self, keys: np.ndarray, matrix: np.ndarray, excluded: int = 0):
        if len(keys) != matrix.shape[0]:
            raise ConfigError("keys and matrix row counts differ")
        self.keys = keys  # TokenIds, ascending
        self.matrix = matrix  # f32 unit rows
        self.excluded = excluded  # old tokens without a stored embedding
        self._matrix64 = matrix.astype(np.float64)

    def __len__(self) -> int:
        return len(self.keys)


def build_index(store: AuxEmbeddingStore, old_vocab: Vocabulary, old_tok: BpeTokenizer) -> KnnIndex:
    """Index every old-vocab token whose decoded string has a stored embedding."""
    keys: list[TokenId] = []
    rows: list[np.ndarray] = []
    excluded = 0
    for token_id in range(len(old_vocab)):
        vec = store.embed(old_tok.token_text(token_id))
        if vec is None:
            excluded += 1
        else:
            keys.append(token_id)
            rows.append(vec)
    if not keys:
        raise ConfigError("cannot build kNN index: no old-vocabulary token has an auxiliary embedding")
    return KnnIndex(np.asarray(keys, dtype=np.int64), np.vstack(rows), excluded=excluded)


def query(index: KnnIndex, q: np.ndarray, k: int) -> list[tuple[TokenId, float]]:
    """Top-k rows by cosine similarity, exact.

    Results are sorted by descending similarity; exact ties break on
    ascending token id. The query vector must already be unit-normalized.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    q64 = np.asarray(q, dtype=np.float64)
    if q64.shape != (index.matrix.shape[1],):
        raise ConfigError(f"query dim {q64.shape} does not match index dim ({index.matrix.shape[1]},)")
    norm = float(np.sqrt(np.dot(q64, q64)))
    if abs(norm - 1.0) > 1e-4:
        raise ConfigError(f"query vector must have unit norm, got {norm}")
    sims = index._matrix64 @ q64
    order = np.lexsort((index.keys, -sims))[:k]
    return [(int(index.keys[i]), float(sims[i])) for i in order]
