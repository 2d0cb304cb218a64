"""Minimal reader/encoder for the tokenizer JSON interchange format.

The harness consumes tokenizer files produced by the transplantation
toolkit but stays decoupled from it, so the byte-level BPE encoding is
reimplemented here from the documented schema: token ids are contiguous,
merges are listed in rank order, and encoding applies the lowest-rank
adjacent merge first (leftmost occurrence first) over the byte-level
symbol stream of the whole input.
"""

from __future__ import annotations

import heapq
import json


def _bytes_to_unicode() -> dict[int, str]:
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


_BYTE_TO_CHAR = _bytes_to_unicode()


class JsonBpeTokenizer:
    """Encode-only byte-level BPE tokenizer loaded from a tokenizer JSON file."""

    def __init__(self, path: str):
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("version") != 1 or doc.get("byte_level") is not True:
            raise ValueError(f"{path}: unsupported tokenizer file")
        size = len(doc["vocab"])
        if sorted(doc["vocab"].values()) != list(range(size)):
            raise ValueError(f"{path}: token ids must be contiguous 0..{size - 1}")
        self.index: dict[str, int] = dict(doc["vocab"])
        self.vocab_size = size
        self.ranks: dict[tuple[str, str], int] = {}
        for rank, (left, right) in enumerate(doc["merges"]):
            self.ranks.setdefault((left, right), rank)

    def encode(self, text: str) -> list[int]:
        syms = [_BYTE_TO_CHAR[b] for b in text.encode("utf-8")]
        n = len(syms)
        if n > 1 and self.ranks:
            nxt = list(range(1, n + 1))
            prv = list(range(-1, n - 1))
            alive = [True] * n
            heap = []
            for i in range(n - 1):
                r = self.ranks.get((syms[i], syms[i + 1]))
                if r is not None:
                    heap.append((r, i))
            heapq.heapify(heap)
            while heap:
                rank, i = heapq.heappop(heap)
                if not alive[i]:
                    continue
                j = nxt[i]
                if j >= n or not alive[j] or self.ranks.get((syms[i], syms[j])) != rank:
                    continue
                syms[i] = syms[i] + syms[j]
                alive[j] = False
                nxt[i] = nxt[j]
                if nxt[j] < n:
                    prv[nxt[j]] = i
                p = prv[i]
                if p >= 0 and alive[p]:
                    r2 = self.ranks.get((syms[p], syms[i]))
                    if r2 is not None:
                        heapq.heappush(heap, (r2, p))
                k = nxt[i]
                if k < n and alive[k]:
                    r2 = self.ranks.get((syms[i], syms[k]))
                    if r2 is not None:
                        heapq.heappush(heap, (r2, i))
            syms = [syms[i] for i in range(n) if alive[i]]
        try:
            return [self.index[s] for s in syms]
        except KeyError as exc:
            raise ValueError(f"text is not encodable with this vocabulary: missing {exc}") from exc
