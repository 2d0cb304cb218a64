import csv

import pytest

from tokengraft.bpe import BYTE_SYMBOLS, BpeTokenizer, MergeRule, train_bpe
from tokengraft.compression import (
    compare_tokenizers,
    eval_compression,
    format_table,
    word_count,
    word_count_histogram,
    write_csv,
)
from tokengraft.errors import ConfigError
from tokengraft.supertoken import ChunkLengthDistribution, SupertokenConfig, train_supertokenizer
from tokengraft.vocab import Vocabulary

SPACE = "Ġ"  # byte-level character for 0x20


def make_203_byte_tokenizer():
    """Hand-built merge chain: 'a'*17 and ' aaaaa' each collapse to one token."""
    a = "a"
    products = [a * 2, a * 4, a * 8, a * 16, a * 17, a * 5, SPACE + a * 5]
    merges = [
        MergeRule(a, a, 0),
        MergeRule(a * 2, a * 2, 1),
        MergeRule(a * 4, a * 4, 2),
        MergeRule(a * 8, a * 8, 3),
        MergeRule(a * 16, a, 4),
        MergeRule(a * 4, a, 5),
        MergeRule(SPACE, a * 5, 6),
    ]
    return BpeTokenizer(Vocabulary(BYTE_SYMBOLS + products), merges)


def test_bytes_per_token_matches_published_figure():
    # 203 bytes segmented into 32 tokens: 6.344 bytes/token at 3 d.p.
    doc = "a" * 17 + (" " + "a" * 5) * 31
    assert len(doc.encode("utf-8")) == 203
    tok = make_203_byte_tokenizer()
    stats = eval_compression(tok, [doc])
    assert stats.total_tokens == 32
    assert stats.corpus_bytes == 203
    assert f"{stats.bytes_per_token:.3f}" == "6.344"


def test_single_token_corpus():
    tok = make_203_byte_tokenizer()
    stats = eval_compression(tok, ["a" * 17])
    assert stats.total_tokens == 1
    assert stats.bytes_per_token == stats.corpus_bytes == 17


def test_byte_vocab_tokenizer_yields_one_token_per_byte():
    tok = train_bpe(["irrelevant"], 256)
    corpus = ["hello world", "Zürich 中文", "  spaced  "]
    stats = eval_compression(tok, corpus)
    assert stats.total_tokens == stats.corpus_bytes == sum(len(d.encode("utf-8")) for d in corpus)


def test_empty_corpus_raises():
    tok = train_bpe(["x"], 256)
    with pytest.raises(ConfigError):
        eval_compression(tok, [])


def test_batching_invariance():
    tok = train_bpe(["the cat sat on the mat"] * 5, 300)
    docs = ["the cat sat", "on the mat", "the the the"]
    merged = eval_compression(tok, ["\n".join(docs)])
    split = eval_compression(tok, docs)
    # newline bytes differ; token totals over identical text content do not
    assert split.total_tokens == sum(len(tok.encode(d)) for d in docs)
    per_doc = sum(len(tok.encode(d)) for d in docs)
    assert split.total_tokens == per_doc
    assert merged.corpus_bytes == split.corpus_bytes + 2


def test_workers_do_not_change_stats():
    tok = train_bpe(["the cat sat on the mat"] * 5, 300)
    docs = ["the cat sat", "on the mat", "unseen words"] * 10
    a = eval_compression(tok, docs, workers=1)
    b = eval_compression(tok, docs, workers=4)
    assert (a.total_tokens, a.corpus_bytes, a.unique_token_types_used) == (
        b.total_tokens,
        b.corpus_bytes,
        b.unique_token_types_used,
    )


def test_word_count():
    assert word_count("hello world") == 2
    assert word_count(" the") == 1
    assert word_count("   ") == 0
    assert word_count("") == 0


def test_histogram_bins_by_decoded_word_count():
    tok = make_203_byte_tokenizer()
    doc = "a" * 17 + (" " + "a" * 5) * 31
    hist = word_count_histogram(tok, [doc])
    # two token types: 'a'*17 (1 word) and ' aaaaa' (1 word)
    assert hist.bins == {1: 2}
    assert hist.total_types() == 2


def test_histogram_occurrence_weighted():
    tok = make_203_byte_tokenizer()
    doc = "a" * 17 + (" " + "a" * 5) * 31
    hist = word_count_histogram(tok, [doc], weight_by_occurrence=True)
    assert hist.bins == {1: 32}


def test_supertokenizer_histogram_has_multiword_mass():
    corpus = ["the quick brown fox jumps over the lazy dog"] * 300
    dist = ChunkLengthDistribution.from_mapping({2: 0.5, 3: 0.5})
    st = train_supertokenizer(corpus, SupertokenConfig(dist=dist, vocab_size=512, seed=0))
    plain = train_bpe(corpus, 512)
    st_hist = word_count_histogram(st, corpus)
    plain_hist = word_count_histogram(plain, corpus)
    assert any(w >= 2 and c > 0 for w, c in st_hist.bins.items())
    assert all(w < 2 for w, c in plain_hist.bins.items() if c > 0)


def test_compare_tokenizers_and_csv(tmp_path):
    byte_tok = train_bpe(["x"], 256)
    trained = train_bpe(["the cat sat"] * 20, 300)
    corpora = {"cats": lambda: iter(["the cat sat", "the cat"])}
    rows = compare_tokenizers({"bytes": byte_tok, "trained": trained}, corpora)
    assert len(rows) == 2
    by_name = {r["tokenizer"]: r for r in rows}
    assert by_name["trained"]["total_tokens"] < by_name["bytes"]["total_tokens"]
    table = format_table(rows)
    assert "tokenizer" in table and "cats" in table
    out = tmp_path / "stats.csv"
    write_csv(rows, str(out))
    with open(out, newline="") as f:
        parsed = list(csv.reader(f))
    assert parsed[0] == ["tokenizer", "corpus", "total_tokens", "corpus_bytes", "bytes_per_token"]
    assert len(parsed) == 3
