import json
import os
import random
import struct
import subprocess
import sys

import numpy as np
import pytest
import torch

# ----------------------------------------------------------------------
# synthetic three-domain corpus with enough structure for a tiny LM to learn

ADJS = ["quick", "lazy", "bright", "small", "happy", "green", "quiet", "bold", "tired", "warm"]
NOUNS = ["cat", "dog", "fox", "bird", "tree", "river", "stone", "cloud", "house", "road"]
VERBS = ["sees", "likes", "chases", "finds", "watches", "follows", "greets", "avoids"]
FUNCS = ["load", "save", "parse", "merge", "split", "index", "count", "scan"]


def english_sentence(rng: random.Random) -> str:
    return (
        f"the {rng.choice(ADJS)} {rng.choice(NOUNS)} {rng.choice(VERBS)} "
        f"the {rng.choice(ADJS)} {rng.choice(NOUNS)} ."
    )


def code_line(rng: random.Random) -> str:
    f, g = rng.choice(FUNCS), rng.choice(FUNCS)
    return f"def {f}_{g}(x): return {g}(x) + {rng.randint(0, 9)}"


def math_line(rng: random.Random) -> str:
    a, b = rng.randint(0, 20), rng.randint(0, 20)
    return f"{a} plus {b} equals {a + b}"


def make_corpus(n_per_domain: int, seed: int) -> dict[str, list[str]]:
    rng = random.Random(seed)
    return {
        "english": [english_sentence(rng) for _ in range(n_per_domain)],
        "code": [code_line(rng) for _ in range(n_per_domain)],
        "math": [math_line(rng) for _ in range(n_per_domain)],
    }


def run_tokengraft(*args: str) -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "tokengraft.cli", *args],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, f"tokengraft {' '.join(args)}\n{proc.stderr}"


# ----------------------------------------------------------------------
# AUXV1 writer (documented interchange format) and tokenizer-JSON decoding


def write_auxv1(path: str, dim: int, records: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(b"AUXV1\x00")
        f.write(struct.pack("<I", dim))
        f.write(struct.pack("<Q", len(records)))
        for key, vec in records.items():
            raw = key.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def _byte_decoder() -> dict[str, int]:
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return {chr(c): b for b, c in zip(bs, cs)}


_CHAR_TO_BYTE = _byte_decoder()


def token_texts(tokenizer_json_path: str) -> list[str]:
    """Decoded text of every token id, from the raw tokenizer file."""
    doc = json.load(open(tokenizer_json_path, encoding="utf-8"))
    specials = set(doc["specials"])
    entries = [None] * len(doc["vocab"])
    for tok, i in doc["vocab"].items():
        entries[i] = tok
    out = []
    for tok in entries:
        if tok in specials:
            out.append(tok)
        else:
            out.append(bytes(_CHAR_TO_BYTE[ch] for ch in tok).decode("utf-8", errors="replace"))
    return out


# ----------------------------------------------------------------------
# tiny causal LM


def build_tiny_model(vocab_size: int, seed: int, tied: bool = True):
    from transformers import GPT2Config, GPT2LMHeadModel

    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=vocab_size,
        n_positions=256,
        n_embd=64,
        n_layer=2,
        n_head=2,
        bos_token_id=None,
        eos_token_id=None,
        tie_word_embeddings=tied,
    )
    return GPT2LMHeadModel(config)


def train_tiny_model(model, token_stream: list[int], steps: int, seed: int, block: int = 128):
    rng = np.random.default_rng(seed)
    ids = np.asarray(token_stream, dtype=np.int64)
    optimizer = torch.optim.AdamW(model.parameters(), lr=3e-3)
    model.train()
    torch.manual_seed(seed)
    for step in range(steps):
        starts = rng.integers(0, len(ids) - block - 1, size=8)
        batch = torch.from_numpy(np.stack([ids[s : s + block] for s in starts]))
        out = model(batch, labels=batch)
        out.loss.backward()
        optimizer.step()
        optimizer.zero_grad()
    model.eval()
    return model


# ----------------------------------------------------------------------
# session fixtures


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Corpus files + base/target tokenizers, built through the toolkit CLI."""
    root = tmp_path_factory.mktemp("harness")
    domains = make_corpus(1200, seed=11)
    train_lines = [line for docs in domains.values() for line in docs]
    random.Random(0).shuffle(train_lines)
    corpus_path = root / "train.txt"
    corpus_path.write_text("\n".join(train_lines), encoding="utf-8")

    eval_domains = make_corpus(40, seed=99)
    eval_path = root / "eval.jsonl"
    with open(eval_path, "w", encoding="utf-8") as f:
        for name, docs in eval_domains.items():
            for text in docs:
                f.write(json.dumps({"text": text, "domain": name}) + "\n")

    base_tok = root / "base_tok.json"
    run_tokengraft("train-bpe", "--corpus", str(corpus_path), "--vocab-size", "512", "--out", str(base_tok))
    target_tok = root / "target_tok.json"
    run_tokengraft(
        "train-supertokenizer", "--corpus", str(corpus_path), "--vocab-size", "2048",
        "--chunk-dist", "1:0.3,2:0.4,3:0.3", "--seed", "1", "--out", str(target_tok),
    )
    return {
        "root": root,
        "corpus": str(corpus_path),
        "eval_jsonl": str(eval_path),
        "base_tok": str(base_tok),
        "target_tok": str(target_tok),
    }


@pytest.fixture(scope="session")
def base_model_dir(workspace):
    """Untrained tiny LM checkpoint: enough for identity and plumbing tests."""
    from pplh.tokenizer import JsonBpeTokenizer

    encoder = JsonBpeTokenizer(workspace["base_tok"])
    model = build_tiny_model(encoder.vocab_size, seed=5)
    out = workspace["root"] / "base_model_random"
    model.save_pretrained(str(out))
    return str(out)


def export_base_embeddings(workspace, model_dir, tag: str) -> str:
    """The model's input embedding matrix as a tensor file."""
    from safetensors.torch import save_file
    from transformers import AutoModelForCausalLM

    model = AutoModelForCausalLM.from_pretrained(model_dir)
    emb = model.get_input_embeddings().weight.detach().clone().float()
    tensors_path = workspace["root"] / f"e_old_{tag}.tensors"
    save_file({"embed.input": emb.contiguous()}, str(tensors_path))
    return str(tensors_path)


def cooc_token_vectors(id_lines: list[list[int]], vocab_size: int, dim: int = 48, window: int = 4) -> np.ndarray:
    """PPMI + SVD co-occurrence vectors over token ids: a small external
    semantic space independent of the model being transplanted."""
    counts = np.zeros((vocab_size, vocab_size), dtype=np.float64)
    for ids in id_lines:
        for i, a in enumerate(ids):
            for j in range(max(0, i - window), min(len(ids), i + window + 1)):
                if j != i:
                    counts[a, ids[j]] += 1.0
    total = counts.sum()
    row = counts.sum(axis=1, keepdims=True)
    col = counts.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / (row * col))
    ppmi = np.where(np.isfinite(pmi), np.maximum(pmi, 0.0), 0.0)
    u, s, _ = np.linalg.svd(ppmi, full_matrices=False)
    dim = min(dim, len(s))
    return u[:, :dim] * np.sqrt(s[:dim])


def build_semantic_aux(workspace, tag: str, dim: int = 48) -> str:
    """AUXV1 store over every old and new token string.

    Token-id co-occurrence vectors are built from the corpus with the base
    tokenizer; an arbitrary string embeds as the mean vector of its encoded
    tokens, falling back to character-level co-occurrence vectors for
    strings made only of tokens that never occur in corpus encodings.
    Coverage is total for corpus-alphabet strings, like a real external
    text-embedding model.
    """
    from pplh.tokenizer import JsonBpeTokenizer

    encoder = JsonBpeTokenizer(workspace["base_tok"])
    with open(workspace["corpus"], encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    id_lines = [encoder.encode(line) for line in lines]
    vectors = cooc_token_vectors(id_lines, encoder.vocab_size, dim=dim)
    norms = np.sqrt((vectors * vectors).sum(axis=1))

    chars = sorted({c for line in lines for c in line})
    cidx = {c: i for i, c in enumerate(chars)}
    char_lines = [[cidx[c] for c in line] for line in lines]
    char_vectors = cooc_token_vectors(char_lines, len(chars), dim=dim, window=2)
    if char_vectors.shape[1] < dim:  # char-space rank can be below dim
        pad = np.zeros((char_vectors.shape[0], dim - char_vectors.shape[1]))
        char_vectors = np.hstack([char_vectors, pad])

    def text_embedding(text: str) -> np.ndarray | None:
        v = None
        try:
            ids = [i for i in encoder.encode(text) if norms[i] > 1e-8]
        except ValueError:
            ids = []
        if ids:
            v = vectors[ids].mean(axis=0)
        else:
            cids = [cidx[c] for c in text if c in cidx]
            if cids:
                v = char_vectors[cids].mean(axis=0)
        if v is None:
            return None
        norm = float(np.sqrt(v @ v))
        if norm < 1e-8:
            return None
        return (v / norm).astype(np.float32)

    records: dict[str, np.ndarray] = {}
    for path in (workspace["base_tok"], workspace["target_tok"]):
        for text in token_texts(path):
            if text not in records:
                vec = text_embedding(text)
                if vec is not None:
                    records[text] = vec
    aux_path = workspace["root"] / f"aux_{tag}.auxv1"
    write_auxv1(str(aux_path), dim, records)
    return str(aux_path)
