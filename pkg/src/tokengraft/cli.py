"""Command-line front end.

Subcommands: train-bpe, train-supertokenizer, transplant, eval-compression.
Every run writes a manifest recording the resolved configuration, input
digests, and seed; reruns with an equal manifest produce bit-identical
outputs. Worker count comes from TOKENGRAFT_THREADS and never changes
output bytes. Exit codes: 0 ok, 1 usage/config, 2 bad input file,
3 violated internal invariant.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

from tokengraft import __version__
from tokengraft.aux_embed import load_store
from tokengraft.bpe import BpeTokenizer, iter_corpus_file, train_bpe
from tokengraft.compression import compare_tokenizers, format_table, word_count_histogram, write_csv
from tokengraft.errors import ConfigError, InputFormatError, InvariantError, TokengraftError, TrainingError
from tokengraft.supertoken import ChunkLengthDistribution, SupertokenConfig, train_supertokenizer
from tokengraft.tensor_io import read_embeddings, write_embeddings
from tokengraft.transplant import METHODS, ModelEmbeddings, default_workers, transplant
from tokengraft.vocab import HeuristicConfig


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; our contract says 1.
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(path: str, subcommand: str, config: dict, inputs: dict[str, str], seed: int | None) -> None:
    manifest = {
        "manifest_version": 1,
        "tool": "tokengraft",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {name: {"path": p, "sha256": _sha256(p)} for name, p in inputs.items()},
        "seed": seed,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")


def parse_chunk_dist(text: str) -> ChunkLengthDistribution:
    """Parse '1:0.4,2:0.3,...' into a chunk length distribution."""
    dist: dict[int, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(f"bad chunk-dist entry {part!r}, expected SIZE:PROB")
        size_str, prob_str = part.split(":", 1)
        try:
            size = int(size_str)
            prob = float(prob_str)
        except ValueError as exc:
            raise ConfigError(f"bad chunk-dist entry {part!r}: {exc}") from exc
        if size in dist:
            raise ConfigError(f"duplicate chunk size {size} in chunk-dist")
        dist[size] = prob
    if not dist:
        raise ConfigError("chunk-dist is empty")
    return ChunkLengthDistribution.from_mapping(dist)


def parse_separator(text: str) -> str:
    """Separator flag: hex codepoint like 'E000', or 'U+E000'."""
    cleaned = text.upper().removeprefix("U+")
    try:
        return chr(int(cleaned, 16))
    except (ValueError, OverflowError) as exc:
        raise ConfigError(f"separator must be a hex codepoint like E000, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tokengraft", description="Tokenizer transplantation and supertoken toolkit")
    parser.add_argument("--version", action="version", version=f"tokengraft {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train-bpe", help="train a byte-level BPE tokenizer")
    p_train.add_argument("--corpus", required=True)
    p_train.add_argument("--format", choices=["lines", "jsonl"], default="lines")
    p_train.add_argument("--vocab-size", type=int, required=True)
    p_train.add_argument("--special", action="append", default=[])
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--manifest", default=None)

    p_super = sub.add_parser("train-supertokenizer", help="train a chunk-augmented supertoken tokenizer")
    p_super.add_argument("--corpus", required=True)
    p_super.add_argument("--format", choices=["lines", "jsonl"], default="lines")
    p_super.add_argument("--vocab-size", type=int, required=True)
    p_super.add_argument("--special", action="append", default=[])
    p_super.add_argument("--chunk-dist", default="1:0.4,2:0.3,3:0.2,4:0.1")
    p_super.add_argument("--separator", default="E000", help="hex codepoint inserted between chunks")
    p_super.add_argument("--chunk-unit", choices=["words", "chars"], default="words")
    p_super.add_argument("--out", required=True)
    p_super.add_argument("--seed", type=int, default=0)
    p_super.add_argument("--manifest", default=None)

    p_graft = sub.add_parser("transplant", help="initialize embeddings for a new tokenizer")
    p_graft.add_argument("--old-tokenizer", required=True)
    p_graft.add_argument("--new-tokenizer", required=True)
    p_graft.add_argument("--embeddings", required=True, help="tensor file with embed.input (and embed.output if untied)")
    p_graft.add_argument("--untied", action="store_true")
    p_graft.add_argument("--aux", default=None, help="AUXV1 auxiliary embedding file")
    p_graft.add_argument("--method", choices=list(METHODS), default="tokenadapt")
    p_graft.add_argument("--w-glob", type=float, default=0.3)
    p_graft.add_argument("--temperature", type=float, default=0.6)
    p_graft.add_argument("--k", type=int, default=10)
    p_graft.add_argument("--threshold", type=float, default=None)
    p_graft.add_argument("--length-in-bytes", action="store_true")
    p_graft.add_argument("--map-special", action="append", default=[], metavar="NEW=OLD",
                         help="copy an old token's row for a new special token")
    p_graft.add_argument("--seed", type=int, default=0)
    p_graft.add_argument("--out", required=True)
    p_graft.add_argument("--manifest", default=None)

    p_eval = sub.add_parser("eval-compression", help="benchmark tokenizer compression")
    p_eval.add_argument("--tokenizer", action="append", required=True, metavar="PATH")
    p_eval.add_argument("--corpus", action="append", required=True, metavar="NAME=PATH")
    p_eval.add_argument("--format", choices=["lines", "jsonl"], default="lines")
    p_eval.add_argument("--csv", default=None)
    p_eval.add_argument("--histogram", action="store_true")
    p_eval.add_argument("--manifest", default=None)

    return parser


def cmd_train_bpe(args: argparse.Namespace) -> int:
    tok = train_bpe(iter_corpus_file(args.corpus, args.format), args.vocab_size, args.special)
    tok.save(args.out)
    config = {
        "corpus_format": args.format,
        "vocab_size": args.vocab_size,
        "specials": args.special,
        "out": args.out,
    }
    _write_manifest(args.manifest or args.out + ".manifest.json", "train-bpe", config,
                    {"corpus": args.corpus}, args.seed)
    print(f"wrote {args.out}: {len(tok.vocab)} tokens, {len(tok.merges)} merges", file=sys.stderr)
    return 0


def cmd_train_supertokenizer(args: argparse.Namespace) -> int:
    cfg = SupertokenConfig(
        dist=parse_chunk_dist(args.chunk_dist),
        separator=parse_separator(args.separator),
        vocab_size=args.vocab_size,
        specials=tuple(args.special),
        seed=args.seed,
        chunk_unit=args.chunk_unit,
    )
    tok = train_supertokenizer(iter_corpus_file(args.corpus, args.format), cfg)
    tok.save(args.out)
    config = {
        "corpus_format": args.format,
        "vocab_size": args.vocab_size,
        "specials": args.special,
        "chunk_dist": args.chunk_dist,
        "separator": args.separator,
        "chunk_unit": args.chunk_unit,
        "out": args.out,
    }
    _write_manifest(args.manifest or args.out + ".manifest.json", "train-supertokenizer", config,
                    {"corpus": args.corpus}, args.seed)
    print(f"wrote {args.out}: {len(tok.vocab)} tokens, {len(tok.merges)} merges", file=sys.stderr)
    return 0


def cmd_transplant(args: argparse.Namespace) -> int:
    old_tok = BpeTokenizer.load(args.old_tokenizer)
    new_tok = BpeTokenizer.load(args.new_tokenizer)
    emb_in, emb_out = read_embeddings(args.embeddings)
    if args.untied:
        if emb_out is None:
            raise InputFormatError(f"{args.embeddings}: --untied requires an embed.output tensor")
        model = ModelEmbeddings(input=emb_in, output=emb_out, tied=False)
    else:
        model = ModelEmbeddings(input=emb_in, output=None, tied=True)
    store = load_store(args.aux) if args.aux else None
    special_map = {}
    for spec_pair in args.map_special:
        if "=" not in spec_pair:
            raise ConfigError(f"--map-special expects NEW=OLD, got {spec_pair!r}")
        new_t, old_t = spec_pair.split("=", 1)
        special_map[new_t] = old_t
    cfg = HeuristicConfig(
        temperature=args.temperature,
        k_neighbors=args.k,
        global_weight=args.w_glob,
        similarity_threshold=args.threshold,
        seed=args.seed,
        length_in_bytes=args.length_in_bytes,
    )
    result, report = transplant(
        model, old_tok, new_tok, store, cfg,
        method=args.method, special_map=special_map, workers=default_workers(),
    )
    write_embeddings(args.out, result.input, result.output)
    with open(args.out + ".report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_json_dict(), f, sort_keys=True, indent=1)
        f.write("\n")
    config = {
        "method": args.method,
        "untied": args.untied,
        "w_glob": args.w_glob,
        "temperature": args.temperature,
        "k": args.k,
        "threshold": args.threshold,
        "length_in_bytes": args.length_in_bytes,
        "map_special": sorted(args.map_special),
        "out": args.out,
    }
    inputs = {
        "old_tokenizer": args.old_tokenizer,
        "new_tokenizer": args.new_tokenizer,
        "embeddings": args.embeddings,
    }
    if args.aux:
        inputs["aux"] = args.aux
    _write_manifest(args.manifest or args.out + ".manifest.json", "transplant", config, inputs, args.seed)
    print(f"wrote {args.out}: " + ", ".join(f"{k}={v}" for k, v in sorted(report.counts.items())), file=sys.stderr)
    return 0


def cmd_eval_compression(args: argparse.Namespace) -> int:
    tokenizers = {}
    tok_inputs = {}
    for path in args.tokenizer:
        tokenizers[path] = BpeTokenizer.load(path)
        tok_inputs[f"tokenizer:{path}"] = path
    corpora = {}
    corpus_inputs = {}
    for pair in args.corpus:
        if "=" not in pair:
            raise ConfigError(f"--corpus expects NAME=PATH, got {pair!r}")
        name, path = pair.split("=", 1)
        corpora[name] = (lambda p=path: iter_corpus_file(p, args.format))
        corpus_inputs[f"corpus:{name}"] = path
    workers = default_workers()
    rows = compare_tokenizers(tokenizers, corpora, workers=workers)
    print(format_table(rows))
    if args.histogram:
        for corpus_name, provider in corpora.items():
            for tok_name, tok in tokenizers.items():
                hist = word_count_histogram(tok, provider(), workers=workers)
                dist = " ".join(f"{w}:{c}" for w, c in sorted(hist.bins.items()))
                print(f"histogram tokenizer={tok_name} corpus={corpus_name} {dist}")
    if args.csv:
        write_csv(rows, args.csv)
    config = {
        "tokenizers": list(args.tokenizer),
        "corpora": sorted(corpora),
        "corpus_format": args.format,
        "csv": args.csv,
        "histogram": args.histogram,
    }
    manifest_path = args.manifest or ((args.csv + ".manifest.json") if args.csv else "eval-compression.manifest.json")
    _write_manifest(manifest_path, "eval-compression", config, {**tok_inputs, **corpus_inputs}, None)
    return 0


_DISPATCH = {
    "train-bpe": cmd_train_bpe,
    "train-supertokenizer": cmd_train_supertokenizer,
    "transplant": cmd_transplant,
    "eval-compression": cmd_eval_compression,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _DISPATCH[args.subcommand](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InputFormatError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvariantError, TokengraftError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
