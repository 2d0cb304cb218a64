"""Embedding transplantation onto a new tokenizer vocabulary.

Shared tokens keep their old rows bit-exactly. Each remaining (unique)
token gets a synthesized row built from two estimates:

* a compositional estimate from the token's old-tokenizer sub-tokens,
  weighted by auxiliary semantic similarity blended with relative length,
  sharpened through a temperature softmax;
* a neighborhood estimate from the k most similar old-vocabulary tokens
  in the auxiliary space, similarity-softmax weighted.

The two are convex-combined with `global_weight`; when only one is
computable that one is used; when neither is, a seeded random row matched
to the old matrix's column statistics steps in. Random/mean/sub-token-mean
baselines live here too so experiment scripts can swap methods.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from tokengraft.aux_embed import AuxEmbeddingStore, KnnIndex, build_index, query
from tokengraft.bpe import BpeTokenizer
from tokengraft.errors import ConfigError, InvariantError
from tokengraft.tensor_io import EmbeddingMatrix
from tokengraft.vocab import HeuristicConfig, TokenId, partition_vocab

METHODS = ("tokenadapt", "retok", "mean", "random")

# Provenance labels for synthesized rows; report counts are keyed by these.
SHARED = "shared"
MAPPED_SPECIAL = "mapped_special"
HYBRID = "hybrid"
LOCAL_ONLY = "local_only"
GLOBAL_ONLY = "global_only"
RANDOM_FALLBACK = "random_fallback"
RETOK = "retok"
MEAN = "mean"
RANDOM = "random"


@dataclass
class ModelEmbeddings:
    """A model's input embedding matrix plus the output matrix when untied."""

    input: EmbeddingMatrix
    output: EmbeddingMatrix | None = None
    tied: bool = True

    def __post_init__(self) -> None:
        if self.tied and self.output is not None:
            raise ConfigError("tied embeddings must not carry a separate output matrix")
        if not self.tied:
            if self.output is None:
                raise ConfigError("untied embeddings require an output matrix")
            if self.output.data.shape != self.input.data.shape:
                raise ConfigError(
                    f"output matrix shape {self.output.data.shape} differs from input {self.input.data.shape}"
                )


@dataclass
class TransplantReport:
    """Where every new-vocabulary row came from."""

    counts: dict[str, int]
    provenance: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"counts": self.counts, "config": self.config, "provenance": self.provenance}


def softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically stable softmax in float64."""
    z = np.asarray(scores, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass
class _WeightedIds:
    """A simplex weight vector over old-vocabulary token ids."""

    ids: list[TokenId]
    weights: np.ndarray  # float64, sums to 1


def _apply(weighted: _WeightedIds, matrix: np.ndarray) -> np.ndarray:
    rows = matrix[weighted.ids].astype(np.float64)
    return (rows * weighted.weights[:, None]).sum(axis=0)


def _decompose(text: str, old_tok: BpeTokenizer) -> list[TokenId]:
    try:
        return old_tok.encode(text)
    except ConfigError:
        # Hand-built old vocabularies may not cover all bytes; an
        # unencodable token simply has no valid sub-token decomposition.
        return []


def local_weights(
    text: str,
    old_tok: BpeTokenizer,
    store: AuxEmbeddingStore,
    temperature: float,
    length_in_bytes: bool = False,
    fallback_embedder: Callable[[str], np.ndarray] | None = None,
) -> _WeightedIds | None:
    """Compositional weights over the token's old-tokenizer sub-tokens.

    Per sub-token: semantic similarity to the full string is softmaxed,
    averaged with the relative decoded length, and the combined score is
    softmaxed again at `temperature`. Sub-tokens without an auxiliary
    embedding are dropped (unless a fallback embedder is supplied, which
    only test fixtures should do). Returns None when the full string has
    no embedding or no sub-token survives.
    """
    e_new = store.embed(text)
    if e_new is None and fallback_embedder is not None:
        e_new = fallback_embedder(text)
    if e_new is None:
        return None
    sub_ids = _decompose(text, old_tok)
    if not sub_ids:
        return None

    def measure(s: str) -> int:
        return len(s.encode("utf-8")) if length_in_bytes else len(s)

    e_new64 = e_new.astype(np.float64)
    kept_ids: list[TokenId] = []
    sims: list[float] = []
    rel_len: list[float] = []
    denom = max(1, measure(text))
    for token_id in sub_ids:
        sub_text = old_tok.token_text(token_id)
        e_sub = store.embed(sub_text)
        if e_sub is None and fallback_embedder is not None:
            e_sub = fallback_embedder(sub_text)
        if e_sub is None:
            continue
        kept_ids.append(token_id)
        sims.append(float(e_new64 @ e_sub.astype(np.float64)))
        rel_len.append(measure(sub_text) / denom)
    if not kept_ids:
        return None
    w_sem = softmax(np.asarray(sims))
    combined = (w_sem + np.asarray(rel_len, dtype=np.float64)) / 2.0
    return _WeightedIds(kept_ids, softmax(combined / temperature))


def global_weights(
    text: str,
    index: KnnIndex,
    store: AuxEmbeddingStore,
    k: int,
    temperature: float,
    threshold: float | None = None,
    fallback_embedder: Callable[[str], np.ndarray] | None = None,
) -> _WeightedIds | None:
    """Similarity-softmax weights over the k nearest old-vocabulary neighbors.

    With a threshold, neighbors scoring below it are dropped before the
    softmax (survivors are renormalized). A threshold of -1 or lower is a
    no-op, identical to passing None. Returns None when the string has no
    embedding or no neighbor survives.
    """
    e_new = store.embed(text)
    if e_new is None and fallback_embedder is not None:
        e_new = fallback_embedder(text)
    if e_new is None:
        return None
    neighbors = query(index, e_new, k)
    if threshold is not None and threshold > -1.0:
        neighbors = [(token_id, sim) for token_id, sim in neighbors if sim >= threshold]
    if not neighbors:
        return None
    ids = [token_id for token_id, _ in neighbors]
    sims = np.asarray([sim for _, sim in neighbors], dtype=np.float64)
    return _WeightedIds(ids, softmax(sims / temperature))


def local_estimate(
    text: str,
    old_tok: BpeTokenizer,
    e_old: EmbeddingMatrix,
    store: AuxEmbeddingStore,
    temperature: float,
    length_in_bytes: bool = False,
    fallback_embedder: Callable[[str], np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Compositional embedding estimate; returns (vector, weights) or None."""
    weighted = local_weights(text, old_tok, store, temperature, length_in_bytes, fallback_embedder)
    if weighted is None:
        return None
    return _apply(weighted, e_old.data), weighted.weights


def global_estimate(
    text: str,
    index: KnnIndex,
    e_old: EmbeddingMatrix,
    store: AuxEmbeddingStore,
    k: int,
    temperature: float,
    threshold: float | None = None,
    fallback_embedder: Callable[[str], np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Neighborhood embedding estimate; returns (vector, weights) or None."""
    weighted = global_weights(text, index, store, k, temperature, threshold, fallback_embedder)
    if weighted is None:
        return None
    return _apply(weighted, e_old.data), weighted.weights


def hybrid_combine(
    local: np.ndarray | None,
    glob: np.ndarray | None,
    global_weight: float,
    fallback: Callable[[], np.ndarray],
) -> tuple[np.ndarray, str]:
    """Blend the two estimates; returns (vector, provenance label).

    Both valid: convex combination (the endpoints return the respective
    estimate exactly). One valid: that one. Neither: `fallback()` draws the
    seeded random row.
    """
    if local is not None and glob is not None:
        if global_weight == 0.0:
            return local.copy(), HYBRID
        if global_weight == 1.0:
            return glob.copy(), HYBRID
        return (1.0 - global_weight) * local + global_weight * glob, HYBRID
    if local is not None:
        return local, LOCAL_ONLY
    if glob is not None:
        return glob, GLOBAL_ONLY
    return fallback(), RANDOM_FALLBACK


def retok_init(text: str, old_tok: BpeTokenizer, e_old: EmbeddingMatrix) -> np.ndarray | None:
    """Unweighted mean of the old sub-token rows; None on empty decomposition."""
    sub_ids = _decompose(text, old_tok)
    if not sub_ids:
        return None
    return e_old.data[sub_ids].astype(np.float64).mean(axis=0)


def mean_init(e_old: EmbeddingMatrix) -> np.ndarray:
    """Column-wise mean over all old rows."""
    return e_old.data.astype(np.float64).mean(axis=0)


def random_init(e_old: EmbeddingMatrix, rng: np.random.Generator) -> np.ndarray:
    """Gaussian row with per-column mean/std matched to the old matrix."""
    data = e_old.data.astype(np.float64)
    return data.mean(axis=0) + data.std(axis=0) * rng.standard_normal(e_old.dim)


def _token_normal(seed: int, token_id: TokenId, dim: int) -> np.ndarray:
    """The standard-normal draw behind every random row for this token.

    Keyed by (seed, token id) so results are independent of worker
    scheduling, and shared between the input and output matrices so a
    tied run equals an untied run with a duplicated matrix.
    """
    return np.random.default_rng([seed, token_id]).standard_normal(dim)


@dataclass
class _ColumnStats:
    mean: np.ndarray
    std: np.ndarray


def _column_stats(matrix: np.ndarray) -> _ColumnStats:
    data = matrix.astype(np.float64)
    return _ColumnStats(data.mean(axis=0), data.std(axis=0))


def transplant(
    model: ModelEmbeddings,
    old_tok: BpeTokenizer,
    new_tok: BpeTokenizer,
    store: AuxEmbeddingStore | None,
    cfg: HeuristicConfig,
    method: str = "tokenadapt",
    special_map: dict[str, str] | None = None,
    workers: int = 1,
    fallback_embedder: Callable[[str], np.ndarray] | None = None,
) -> tuple[ModelEmbeddings, TransplantReport]:
    """Build embedding matrices for the new vocabulary.

    Shared tokens (exact string matches) are copied bit-exactly. Unique
    tokens are synthesized per `method`. Untied models get the same
    per-token weights applied to the input and output matrices
    independently. Deterministic given cfg.seed, for any worker count.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}, expected one of {METHODS}")
    old_vocab = old_tok.vocab
    new_vocab = new_tok.vocab
    if model.input.rows != len(old_vocab):
        raise ConfigError(
            f"input matrix has {model.input.rows} rows but the old vocabulary has {len(old_vocab)} tokens"
        )
    dim = model.input.dim
    special_map = dict(special_map or {})
    for new_token, old_token in special_map.items():
        if new_token not in new_vocab:
            raise ConfigError(f"special mapping source {new_token!r} is not in the new vocabulary")
        if old_token not in old_vocab:
            raise ConfigError(f"special mapping target {old_token!r} is not in the old vocabulary")

    partition = partition_vocab(old_vocab, new_vocab)
    mapped = {tok for tok in special_map if tok in partition.unique}
    synth_ids = sorted(
        new_vocab.index[tok] for tok in partition.unique if tok not in mapped
    )

    index: KnnIndex | None = None
    if method == "tokenadapt" and synth_ids:
        if store is None:
            raise ConfigError("the hybrid method needs an auxiliary store when unique tokens exist")
        index = build_index(store, old_vocab, old_tok)

    sources = [model.input.data]
    if not model.tied:
        sources.append(model.output.data)  # type: ignore[union-attr]
    stats = [_column_stats(src) for src in sources]
    outputs = [np.empty((len(new_vocab), dim), dtype=np.float32) for _ in sources]

    # Phase 1: shared tokens keep their rows, plus explicit special mappings.
    provenance_by_id: dict[TokenId, str] = {}
    for token in partition.shared:
        new_id = new_vocab.index[token]
        old_id = old_vocab.index[token]
        for src, out in zip(sources, outputs):
            out[new_id] = src[old_id]
        provenance_by_id[new_id] = SHARED
    for token in mapped:
        new_id = new_vocab.index[token]
        old_id = old_vocab.index[special_map[token]]
        for src, out in zip(sources, outputs):
            out[new_id] = src[old_id]
        provenance_by_id[new_id] = MAPPED_SPECIAL

    # Phase 2: synthesize the rest. Each task returns one float64 row per
    # matrix plus the provenance label; tasks are pure, so any scheduling
    # yields identical output.
    def synthesize(new_id: TokenId) -> tuple[list[np.ndarray], str]:
        text = new_tok.token_text(new_id)

        def random_rows() -> list[np.ndarray]:
            z = _token_normal(cfg.seed, new_id, dim)
            return [st.mean + st.std * z for st in stats]

        if method == "random":
            return random_rows(), RANDOM
        if method == "mean":
            return [st.mean.copy() for st in stats], MEAN
        if method == "retok":
            sub_ids = _decompose(text, old_tok)
            if not sub_ids:
                return random_rows(), RANDOM_FALLBACK
            return [src[sub_ids].astype(np.float64).mean(axis=0) for src in sources], RETOK

        local = local_weights(
            text, old_tok, store, cfg.temperature, cfg.length_in_bytes, fallback_embedder
        )
        glob = global_weights(
            text, index, store, cfg.k_neighbors, cfg.temperature,
            cfg.similarity_threshold, fallback_embedder,
        )
        rows: list[np.ndarray] = []
        label = None
        randoms: list[np.ndarray] | None = None
        for i, src in enumerate(sources):
            local_vec = _apply(local, src) if local is not None else None
            glob_vec = _apply(glob, src) if glob is not None else None
            if randoms is None and local_vec is None and glob_vec is None:
                randoms = random_rows()
            vec, label = hybrid_combine(
                local_vec, glob_vec, cfg.global_weight,
                fallback=lambda i=i: randoms[i],  # type: ignore[index]
            )
            rows.append(vec)
        assert label is not None
        return rows, label

    if synth_ids:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(synthesize, synth_ids))
        else:
            results = [synthesize(new_id) for new_id in synth_ids]
        for new_id, (rows, label) in zip(synth_ids, results):
            for out, row in zip(outputs, rows):
                out[new_id] = row.astype(np.float32)
            provenance_by_id[new_id] = label

    counts: dict[str, int] = {}
    provenance = []
    for new_id in range(len(new_vocab)):
        label = provenance_by_id[new_id]
        counts[label] = counts.get(label, 0) + 1
        provenance.append({"id": new_id, "token": new_vocab.entries[new_id], "source": label})
    if sum(counts.values()) != len(new_vocab):
        raise InvariantError("provenance counts do not cover the new vocabulary")

    report = TransplantReport(
        counts=counts,
        provenance=provenance,
        config={
            "method": method,
            "temperature": cfg.temperature,
            "k_neighbors": cfg.k_neighbors,
            "global_weight": cfg.global_weight,
            "similarity_threshold": cfg.similarity_threshold,
            "seed": cfg.seed,
            "length_in_bytes": cfg.length_in_bytes,
            "tied": model.tied,
            "old_vocab_size": len(old_vocab),
            "new_vocab_size": len(new_vocab),
            "index_excluded_tokens": index.excluded if index is not None else None,
        },
    )
    new_input = EmbeddingMatrix(outputs[0], role="input")
    if model.tied:
        return ModelEmbeddings(input=new_input, output=None, tied=True), report
    new_output = EmbeddingMatrix(outputs[1], role="output")
    return ModelEmbeddings(input=new_input, output=new_output, tied=False), report


def default_workers() -> int:
    """Worker count from TOKENGRAFT_THREADS; never changes outputs, only speed."""
    raw = os.environ.get("TOKENGRAFT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"TOKENGRAFT_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"TOKENGRAFT_THREADS must be >= 1, got {n}")
    return n
