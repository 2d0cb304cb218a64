import os
import random

import numpy as np
import pytest

from tokengraft.aux_embed import AuxEmbeddingStore
from tokengraft.bpe import train_bpe

GOLDEN_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "golden")


def random_utf8(rng: random.Random, max_len: int = 48) -> str:
    """Valid UTF-8 string mixing ASCII, Latin, CJK, and astral codepoints."""
    n = rng.randrange(max_len + 1)
    chars = []
    for _ in range(n):
        bucket = rng.random()
        if bucket < 0.5:
            cp = rng.randrange(0x20, 0x7F)
        elif bucket < 0.7:
            cp = rng.randrange(0xA0, 0x800)
        elif bucket < 0.85:
            cp = rng.randrange(0x800, 0xD800)
        elif bucket < 0.95:
            cp = rng.choice((0x09, 0x0A, 0x0D, 0x20))
        else:
            cp = rng.randrange(0x10000, 0x110000)
        chars.append(chr(cp))
    return "".join(chars)


def unit_store(entries: dict[str, list[float]], dim: int) -> AuxEmbeddingStore:
    """In-memory store with vectors normalized the same way load_store does."""
    store = AuxEmbeddingStore(dim=dim)
    for key, vec in entries.items():
        v = np.asarray(vec, dtype=np.float32).astype(np.float64)
        store.vectors[key] = (v / np.sqrt(v @ v)).astype(np.float32)
    return store


@pytest.fixture(scope="session")
def small_tokenizer():
    corpus = [
        "the cat sat on the mat",
        "a quick brown fox jumps over the lazy dog",
        "numbers 0123456789 and symbols !?",
        "servus, Zürich; 中文 text",
    ] * 25
    return train_bpe(corpus, 320)
