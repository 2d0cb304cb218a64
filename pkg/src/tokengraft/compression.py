"""Tokenizer efficiency benchmarking: token totals, bytes/token, word histograms."""

from __future__ import annotations

import csv
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

from tokengraft.bpe import BpeTokenizer
from tokengraft.errors import ConfigError
from tokengraft.vocab import TokenId


@dataclass
class CompressionStats:
    corpus_bytes: int
    total_tokens: int
    unique_token_types_used: int

    @property
    def bytes_per_token(self) -> float:
        if self.total_tokens == 0:
            return 0.0
        return self.corpus_bytes / self.total_tokens


@dataclass
class WordCountHistogram:
    """bins[w] = number of distinct token types whose decoded string has w words."""

    bins: dict[int, int] = field(default_factory=dict)

    def total_types(self) -> int:
        return sum(self.bins.values())


def _encode_docs(tok: BpeTokenizer, corpus: Iterable[str], workers: int = 1) -> Iterable[list[TokenId]]:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(tok.encode, corpus, chunksize=16)
    else:
        for doc in corpus:
            yield tok.encode(doc)


def eval_compression(tok: BpeTokenizer, corpus: Iterable[str], workers: int = 1) -> CompressionStats:
    """Total tokens and UTF-8 bytes over a corpus of documents."""
    corpus_bytes = 0
    total_tokens = 0
    seen: set[TokenId] = set()
    empty = True
    if workers > 1:
        docs = list(corpus)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for doc, ids in zip(docs, pool.map(tok.encode, docs, chunksize=16)):
                empty = False
                corpus_bytes += len(doc.encode("utf-8"))
                total_tokens += len(ids)
                seen.update(ids)
    else:
        for doc in corpus:
            empty = False
            ids = tok.encode(doc)
            corpus_bytes += len(doc.encode("utf-8"))
            total_tokens += len(ids)
            seen.update(ids)
    if empty:
        raise ConfigError("corpus is empty: nothing to evaluate")
    return CompressionStats(corpus_bytes, total_tokens, len(seen))


def word_count(text: str) -> int:
    """Whitespace-delimited word count; pure-whitespace strings count 0."""
    return len(text.split())


def word_count_histogram(
    tok: BpeTokenizer,
    corpus: Iterable[str],
    weight_by_occurrence: bool = False,
    workers: int = 1,
) -> WordCountHistogram:
    """Histogram over the token types observed when encoding the corpus.

    Each observed type is binned once by the word count of its decoded
    string; with weight_by_occurrence, bins accumulate occurrence counts
    instead of type counts.
    """
    occurrences: Counter[TokenId] = Counter()
    for ids in _encode_docs(tok, corpus, workers):
        occurrences.update(ids)
    bins: dict[int, int] = {}
    for token_id, n in occurrences.items():
        w = word_count(tok.token_text(token_id))
        bins[w] = bins.get(w, 0) + (n if weight_by_occurrence else 1)
    return WordCountHistogram(bins)


def compare_tokenizers(
    tokenizers: dict[str, BpeTokenizer],
    corpora: dict[str, Callable[[], Iterable[str]]],
    workers: int = 1,
) -> list[dict]:
    """Per (tokenizer, corpus) stats rows; corpora are re-iterable providers."""
    rows = []
    for corpus_name, provider in corpora.items():
        for tok_name, tok in tokenizers.items():
            stats = eval_compression(tok, provider(), workers=workers)
            rows.append(
                {
                    "tokenizer": tok_name,
                    "corpus": corpus_name,
                    "total_tokens": stats.total_tokens,
                    "corpus_bytes": stats.corpus_bytes,
                    "bytes_per_token": stats.bytes_per_token,
                }
            )
    return rows


def format_table(rows: list[dict]) -> str:
    """Aligned text table of the comparison rows."""
    headers = ["tokenizer", "corpus", "total_tokens", "corpus_bytes", "bytes_per_token"]
    rendered = [
        [
            str(r["tokenizer"]),
            str(r["corpus"]),
            str(r["total_tokens"]),
            str(r["corpus_bytes"]),
            f"{r['bytes_per_token']:.3f}",
        ]
        for r in rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in rendered)) if rendered else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for row in rendered:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines)


def write_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["tokenizer", "corpus", "total_tokens", "corpus_bytes", "bytes_per_token"])
        for r in rows:
            writer.writerow(
                [r["tokenizer"], r["corpus"], r["total_tokens"], r["corpus_bytes"], f"{r['bytes_per_token']:.6f}"]
            )
