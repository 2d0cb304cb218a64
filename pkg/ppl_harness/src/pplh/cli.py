"""CLI: swap transplanted embeddings into a causal LM and report PPL ratios.

    pplh swap-eval --model <path> --tensors e_new.tensors \
        --tokenizer new_tok.json --base-tokenizer old_tok.json \
        --data eval.jsonl --out report.json

The base-model run is cached next to --out, keyed by a digest of the model,
base tokenizer, data file, and window size, so sweeping methods only pays
for the base evaluation once.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from pplh.evaluate import PplReport, eval_ppl, load_domain_jsonl
from pplh.swap import swap_embeddings
from pplh.tokenizer import JsonBpeTokenizer


def _file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _model_digest(model_path: str) -> str:
    h = hashlib.sha256()
    if os.path.isdir(model_path):
        for name in sorted(os.listdir(model_path)):
            full = os.path.join(model_path, name)
            if os.path.isfile(full):
                h.update(name.encode())
                h.update(_file_digest(full).encode())
    else:
        h.update(_file_digest(model_path).encode())
    return h.hexdigest()


def _load_model(model_path: str):
    from transformers import AutoModelForCausalLM

    return AutoModelForCausalLM.from_pretrained(model_path)


def cmd_swap_eval(args: argparse.Namespace) -> int:
    domains = load_domain_jsonl(args.data)
    base_tokenizer = args.base_tokenizer
    if base_tokenizer is None:
        candidate = os.path.join(args.model, "tokenizer.json")
        if not os.path.exists(candidate):
            raise ValueError(
                "no --base-tokenizer given and the model directory has no tokenizer.json"
            )
        base_tokenizer = candidate
    base_encoder = JsonBpeTokenizer(base_tokenizer)
    new_encoder = JsonBpeTokenizer(args.tokenizer)

    cache_key = hashlib.sha256(
        "\n".join(
            [
                _model_digest(args.model),
                _file_digest(base_tokenizer),
                _file_digest(args.data),
                str(args.window),
            ]
        ).encode()
    ).hexdigest()[:16]
    cache_path = os.path.join(os.path.dirname(os.path.abspath(args.out)), f"base_ppl_{cache_key}.json")
    if os.path.exists(cache_path):
        with open(cache_path, "r", encoding="utf-8") as f:
            base = json.load(f)
    else:
        base = eval_ppl(_load_model(args.model), base_encoder, domains, window=args.window, device=args.device)
        with open(cache_path, "w", encoding="utf-8") as f:
            json.dump(base, f, sort_keys=True)

    model = _load_model(args.model)
    swap_embeddings(model, args.tensors, new_encoder.vocab_size, tied=not args.untied)
    transplanted = eval_ppl(model, new_encoder, domains, window=args.window, device=args.device)

    report = PplReport(base=base, transplanted=transplanted).to_json_dict()
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, indent=1)
        f.write("\n")
    overall = report["overall"]["ratio"]
    print(f"overall ppl ratio: {overall:.4f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pplh", description="Perplexity harness for embedding transplants")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    p = sub.add_parser("swap-eval", help="swap embeddings into a model and evaluate PPL ratios")
    p.add_argument("--model", required=True, help="causal LM checkpoint path (or hub id when available)")
    p.add_argument("--tensors", required=True, help="tensor file with embed.input (and embed.output if --untied)")
    p.add_argument("--tokenizer", required=True, help="new tokenizer JSON")
    p.add_argument("--base-tokenizer", default=None,
                   help="tokenizer JSON matching the unmodified model (default: <model>/tokenizer.json)")
    p.add_argument("--data", required=True, help="JSONL with 'text' and 'domain' fields")
    p.add_argument("--untied", action="store_true")
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return cmd_swap_eval(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
