"""Byte-level BPE tokenizer: training, encoding, decoding, JSON serialization.

Token strings for regular tokens live in the printable byte-level alphabet
(the reversible 256-codepoint mapping popularized by GPT-2), so any UTF-8
text round-trips exactly. Special tokens are stored as raw strings and are
never produced by encode().
"""

from __future__ import annotations

import heapq
import json
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

from tokengraft.errors import ConfigError, InvariantError, TokenizerFormatError, TrainingError
from tokengraft.vocab import TokenId, Vocabulary


def bytes_to_unicode() -> dict[int, str]:
    """Map every byte 0..255 to a printable Unicode codepoint, reversibly.

    Printable ASCII and Latin-1 glyphs map to themselves; the rest are shifted
    into the U+0100.. range so that no token string ever contains raw control
    characters or raw whitespace bytes.
    """
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


BYTE_TO_CHAR: dict[int, str] = bytes_to_unicode()
CHAR_TO_BYTE: dict[str, int] = {c: b for b, c in BYTE_TO_CHAR.items()}
# Byte-alphabet symbols in byte order; their vocabulary ids follow the specials.
BYTE_SYMBOLS: list[str] = [BYTE_TO_CHAR[b] for b in range(256)]

# ASCII whitespace only, so word boundaries are identical at the text and
# byte level (multi-byte UTF-8 sequences never contain these bytes).
WS_CHARS = " \t\n\r\f\v"
WS_BYTE_SYMBOLS = frozenset(BYTE_TO_CHAR[ord(c)] for c in WS_CHARS)
_WORD_RE = re.compile(rf"[{WS_CHARS}]*[^{WS_CHARS}]+")


def pre_tokenize(text: str) -> list[str]:
    """Split text into words with any preceding whitespace attached.

    Trailing whitespace that is not followed by a word becomes its own
    pre-token, so the concatenation of the result always equals the input.
    """
    parts = _WORD_RE.findall(text)
    consumed = sum(len(p) for p in parts)
    if consumed < len(text):
        parts.append(text[consumed:])
    return parts


def text_to_symbols(text: str) -> list[str]:
    """UTF-8 encode text and map each byte into the printable alphabet."""
    return [BYTE_TO_CHAR[b] for b in text.encode("utf-8")]


def symbols_to_bytes(token: str) -> bytes:
    """Invert the byte-level mapping for one token string."""
    try:
        return bytes(CHAR_TO_BYTE[ch] for ch in token)
    except KeyError as exc:
        raise InvariantError(f"token {token!r} contains a character outside the byte-level alphabet") from exc


@dataclass(frozen=True)
class MergeRule:
    """One BPE merge: `left + right` becomes a single symbol, applied in rank order."""

    left: str
    right: str
    rank: int


def _spans_word_boundary(product: str) -> bool:
    """True if a merge product contains whitespace after a non-whitespace byte.

    Such a token could only ever match across the boundary where
    pre_tokenize cuts, so its presence disables the word-split fast path.
    """
    seen_word = False
    for ch in product:
        if ch in WS_BYTE_SYMBOLS:
            if seen_word:
                return True
        else:
            seen_word = True
    return False


class BpeTokenizer:
    """Immutable trained tokenizer; encode/decode are pure and thread-safe.

    Merge application treats the whole input as one symbol stream, so
    vocabularies trained with chunk-level pre-tokenization can emit
    multi-word tokens. When no merge product spans a word boundary (true
    for word-bounded training), encoding provably factorizes at those
    boundaries, and a cached per-word fast path is used instead.
    """

    def __init__(self, vocab: Vocabulary, merges: list[MergeRule]):
        for i, rule in enumerate(merges):
            if rule.rank != i:
                raise InvariantError(f"merge ranks must be dense, got rank {rule.rank} at position {i}")
            if rule.left + rule.right not in vocab:
                raise InvariantError(f"merge product {(rule.left + rule.right)!r} missing from vocabulary")
        self.vocab = vocab
        self.merges = tuple(merges)
        self._merge_rank: dict[tuple[str, str], int] = {(m.left, m.right): m.rank for m in merges}
        self._word_split_safe = not any(_spans_word_boundary(m.left + m.right) for m in merges)
        # Pre-token -> ids memo; natural text repeats pre-tokens heavily.
        self._encode_cache: dict[str, tuple[TokenId, ...]] = {}

    # ------------------------------------------------------------------
    # encode / decode

    def _merge_stream(self, symbols: list[str]) -> list[str]:
        """Apply merges greedily: lowest rank first, leftmost occurrence first."""
        n = len(symbols)
        if n < 2:
            return symbols
        ranks = self._merge_rank
        syms = list(symbols)
        nxt = list(range(1, n + 1))
        prv = list(range(-1, n - 1))
        alive = [True] * n
        heap: list[tuple[int, int]] = []
        for i in range(n - 1):
            r = ranks.get((syms[i], syms[i + 1]))
            if r is not None:
                heap.append((r, i))
        heapq.heapify(heap)
        while heap:
            rank, i = heapq.heappop(heap)
            if not alive[i]:
                continue
            j = nxt[i]
            if j >= n or not alive[j]:
                continue
            if ranks.get((syms[i], syms[j])) != rank:
                continue  # stale entry: one side was merged since the push
            syms[i] = syms[i] + syms[j]
            alive[j] = False
            nxt[i] = nxt[j]
            if nxt[j] < n:
                prv[nxt[j]] = i
            p = prv[i]
            if p >= 0 and alive[p]:
                r2 = ranks.get((syms[p], syms[i]))
                if r2 is not None:
                    heapq.heappush(heap, (r2, p))
            k = nxt[i]
            if k < n and alive[k]:
                r2 = ranks.get((syms[i], syms[k]))
                if r2 is not None:
                    heapq.heappush(heap, (r2, i))
        return [syms[i] for i in range(n) if alive[i]]

    def _symbols_to_ids(self, symbols: list[str]) -> list[TokenId]:
        index = self.vocab.index
        ids = []
        for sym in symbols:
            token_id = index.get(sym)
            if token_id is None:
                # Only reachable with a hand-built vocabulary that lacks part
                # of the byte alphabet; trained tokenizers always cover it.
                raise ConfigError(f"text is not encodable: symbol {sym!r} has no token id")
            ids.append(token_id)
        return ids

    def _encode_word(self, word: str) -> tuple[TokenId, ...]:
        cached = self._encode_cache.get(word)
        if cached is not None:
            return cached
        result = tuple(self._symbols_to_ids(self._merge_stream(text_to_symbols(word))))
        self._encode_cache[word] = result
        return result

    def encode(self, text: str) -> list[TokenId]:
        """Encode UTF-8 text; special tokens in the text are treated as plain text."""
        if self._word_split_safe:
            ids: list[TokenId] = []
            for word in pre_tokenize(text):
                ids.extend(self._encode_word(word))
            return ids
        return self._symbols_to_ids(self._merge_stream(text_to_symbols(text)))

    def decode(self, ids: Iterable[TokenId]) -> str:
        """Decode token ids to text; the exact inverse for encode() output."""
        specials = self.vocab.specials
        entries = self.vocab.entries
        size = len(entries)
        pieces: list[str] = []
        buf = bytearray()
        for token_id in ids:
            if not 0 <= token_id < size:
                raise ConfigError(f"token id {token_id} out of range 0..{size - 1}")
            token = entries[token_id]
            if token in specials:
                if buf:
                    pieces.append(buf.decode("utf-8", errors="replace"))
                    buf = bytearray()
                pieces.append(token)
            else:
                buf += symbols_to_bytes(token)
        if buf:
            pieces.append(buf.decode("utf-8", errors="replace"))
        return "".join(pieces)

    def token_text(self, token_id: TokenId) -> str:
        """The decoded text of a single token (specials decode to themselves)."""
        return self.decode([token_id])

    # ------------------------------------------------------------------
    # serialization

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "byte_level": True,
            "specials": sorted(self.vocab.specials),
            "vocab": {tok: i for i, tok in enumerate(self.vocab.entries)},
            "merges": [[m.left, m.right] for m in self.merges],
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, ensure_ascii=False, indent=1)
            f.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BpeTokenizer":
        for key in ("version", "byte_level", "specials", "vocab", "merges"):
            if key not in doc:
                raise TokenizerFormatError(f"tokenizer file missing required key {key!r}")
        if doc["version"] != 1:
            raise TokenizerFormatError(f"unsupported tokenizer file version {doc['version']!r}")
        if doc["byte_level"] is not True:
            raise TokenizerFormatError("only byte_level tokenizers are supported")
        vocab_map = doc["vocab"]
        size = len(vocab_map)
        entries: list[str | None] = [None] * size
        for tok, token_id in vocab_map.items():
            if not isinstance(token_id, int) or not 0 <= token_id < size:
                raise TokenizerFormatError(
                    f"token id for {tok!r} must be a contiguous id in 0..{size - 1}, got {token_id!r}"
                )
            if entries[token_id] is not None:
                raise TokenizerFormatError(f"duplicate token id {token_id}")
            entries[token_id] = tok
        vocab = Vocabulary(entries, specials=set(doc["specials"]))  # type: ignore[arg-type]
        merges = []
        for rank, pair in enumerate(doc["merges"]):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise TokenizerFormatError(f"merge at rank {rank} must be a [left, right] pair, got {pair!r}")
            left, right = pair
            if left + right not in vocab:
                raise TokenizerFormatError(f"merge product {(left + right)!r} at rank {rank} missing from vocab")
            merges.append(MergeRule(left, right, rank))
        return cls(vocab, merges)

    @classmethod
    def load(cls, path: str) -> "BpeTokenizer":
        with open(path, "r", encoding="utf-8") as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as exc:
                raise TokenizerFormatError(
                    f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno} (offset {exc.pos})"
                ) from exc
        if not isinstance(doc, dict):
            raise TokenizerFormatError(f"{path}: top-level value must be an object")
        return cls.from_json_dict(doc)


# ----------------------------------------------------------------------
# training


class _PairStats:
    """Adjacent-pair frequency bookkeeping with a lazily invalidated heap.

    Heap entries are (-count, pair); stale entries are skipped on pop, so the
    most frequent pair with the lexicographically smallest (left, right) tie
    wins deterministically.
    """

    def __init__(self, words: list[tuple[list[str], int]]):
        self.words = words
        self.counts: Counter[tuple[str, str]] = Counter()
        self.where: dict[tuple[str, str], set[int]] = {}
        for idx, (symbols, count) in enumerate(words):
            for pair in zip(symbols, symbols[1:]):
                self.counts[pair] += count
                self.where.setdefault(pair, set()).add(idx)
        self.heap: list[tuple[int, tuple[str, str]]] = [(-c, p) for p, c in self.counts.items()]
        heapq.heapify(self.heap)

    def pop_best(self) -> tuple[str, str] | None:
        while self.heap:
            neg_count, pair = heapq.heappop(self.heap)
            if self.counts.get(pair, 0) == -neg_count and neg_count < 0:
                return pair
        return None

    def _bump(self, pair: tuple[str, str], delta: int, idx: int) -> None:
        new_count = self.counts[pair] + delta
        if new_count <= 0:
            self.counts.pop(pair, None)
            self.where.pop(pair, None)
            return
        self.counts[pair] = new_count
        if delta > 0:
            self.where.setdefault(pair, set()).add(idx)
        heapq.heappush(self.heap, (-new_count, pair))

    def apply_merge(self, pair: tuple[str, str], merged: str) -> None:
        left, right = pair
        affected = list(self.where.get(pair, ()))
        self.counts.pop(pair, None)
        self.where.pop(pair, None)
        for idx in affected:
            symbols, count = self.words[idx]
            for old_pair in zip(symbols, symbols[1:]):
                if old_pair != pair:
                    self._bump(old_pair, -count, idx)
            out: list[str] = []
            i = 0
            n = len(symbols)
            while i < n:
                if i < n - 1 and symbols[i] == left and symbols[i + 1] == right:
                    out.append(merged)
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            self.words[idx] = (out, count)
            for new_pair in zip(out, out[1:]):
                self._bump(new_pair, count, idx)
        # _bump dropped stale membership for pairs bumped to zero; surviving
        # pairs keep their sets, including indices where they no longer occur.
        # Those are filtered naturally: re-merging scans symbols as they are.


def _train_from_word_counts(
    word_counts: Counter[str],
    vocab_size: int,
    specials: list[str],
) -> BpeTokenizer:
    entries: list[str] = []
    seen: set[str] = set()
    for sp in specials:
        if sp in seen:
            raise ConfigError(f"duplicate special token {sp!r}")
        entries.append(sp)
        seen.add(sp)
    for sym in BYTE_SYMBOLS:
        if sym in seen:
            raise ConfigError(f"special token {sym!r} collides with the byte alphabet")
        entries.append(sym)
        seen.add(sym)

    words = [(text_to_symbols(w), c) for w, c in word_counts.items()]
    stats = _PairStats(words)

    merges: list[MergeRule] = []
    done: set[tuple[str, str]] = set()
    while len(entries) < vocab_size:
        pair = stats.pop_best()
        if pair is None:
            break
        if pair in done:
            # Re-formed via a second merge path producing an equal string;
            # a duplicate rule would be unreachable during encode.
            stats.counts.pop(pair, None)
            continue
        done.add(pair)
        merged = pair[0] + pair[1]
        merges.append(MergeRule(pair[0], pair[1], len(merges)))
        if merged not in seen:
            entries.append(merged)
            seen.add(merged)
        stats.apply_merge(pair, merged)

    return BpeTokenizer(Vocabulary(entries, specials=set(specials)), merges)


def train_bpe(
    corpus: Iterable[str],
    vocab_size: int,
    specials: list[str] | None = None,
    pre_tokenizer: Callable[[str], list[str]] = pre_tokenize,
) -> BpeTokenizer:
    """Train a byte-level BPE tokenizer over an iterator of documents.

    The most frequent adjacent symbol pair is merged first; equal-frequency
    ties break on the lexicographically smallest (left, right) pair, so
    training is deterministic given corpus order. `pre_tokenizer` controls
    the units pair statistics are counted within (defaults to whitespace
    words with leading whitespace attached).
    """
    specials = list(specials or [])
    if vocab_size < 256 + len(specials):
        raise ConfigError(
            f"vocab_size must be at least 256 + number of specials = {256 + len(specials)}, got {vocab_size}"
        )
    word_counts: Counter[str] = Counter()
    saw_text = False
    for doc in corpus:
        if doc:
            saw_text = True
        word_counts.update(pre_tokenizer(doc))
    if not saw_text:
        raise TrainingError("training corpus is empty: no non-empty document")
    return _train_from_word_counts(word_counts, vocab_size, specials)


def iter_corpus_file(path: str, fmt: str = "lines") -> Iterator[str]:
    """Yield documents from a corpus file: one per line, or JSONL with a 'text' field."""
    if fmt not in ("lines", "jsonl"):
        raise ConfigError(f"unknown corpus format {fmt!r}, expected 'lines' or 'jsonl'")
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if fmt == "lines":
                yield line
            else:
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise TokenizerFormatError(f"{path}:{lineno}: invalid JSON line: {exc.msg}") from exc
                if not isinstance(doc, dict) or "text" not in doc:
                    raise TokenizerFormatError(f"{path}:{lineno}: JSONL record must be an object with a 'text' field")
                yield str(doc["text"])
