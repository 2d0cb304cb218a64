"""Zero-shot perplexity over domain-labeled documents.

Protocol: each document is tokenized, split into non-overlapping windows of
`window` tokens (a trailing window is kept if it has at least 2 tokens),
and each window contributes exp(mean next-token NLL). Per-domain perplexity
is the mean over that domain's windows; "overall" is the mean over all
windows. Ratios divide the transplanted run by the base run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import torch


def load_domain_jsonl(path: str) -> dict[str, list[str]]:
    """Read JSONL records with 'text' and 'domain' fields, grouped by domain."""
    domains: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            doc = json.loads(line)
            if "text" not in doc or "domain" not in doc:
                raise ValueError(f"{path}:{lineno}: record needs 'text' and 'domain' fields")
            domains.setdefault(str(doc["domain"]), []).append(str(doc["text"]))
    if not domains:
        raise ValueError(f"{path}: no records")
    return domains


def _windows(ids: list[int], window: int) -> list[list[int]]:
    out = []
    for start in range(0, len(ids), window):
        chunk = ids[start : start + window]
        if len(chunk) >= 2:
            out.append(chunk)
    return out


@torch.no_grad()
def eval_ppl(model, encoder, domains: dict[str, list[str]], window: int = 512, device: str = "cpu") -> dict:
    """Mean perplexity per domain plus overall; deterministic given inputs."""
    model.eval()
    model.to(device)
    per_domain: dict[str, float] = {}
    all_ppls: list[float] = []
    for name in sorted(domains):
        ppls: list[float] = []
        for text in domains[name]:
            for chunk in _windows(encoder.encode(text), window):
                input_ids = torch.tensor([chunk], dtype=torch.long, device=device)
                out = model(input_ids, labels=input_ids)
                ppls.append(math.exp(float(out.loss)))
        if not ppls:
            raise ValueError(f"domain {name!r} produced no evaluation windows")
        per_domain[name] = sum(ppls) / len(ppls)
        all_ppls.extend(ppls)
    return {"domains": per_domain, "overall": sum(all_ppls) / len(all_ppls), "windows": len(all_ppls)}


@dataclass
class PplReport:
    """Base vs transplanted perplexity and their ratios."""

    base: dict
    transplanted: dict

    def to_json_dict(self) -> dict:
        domains = {}
        for name in sorted(self.base["domains"]):
            b = self.base["domains"][name]
            t = self.transplanted["domains"][name]
            domains[name] = {"base_ppl": b, "transplanted_ppl": t, "ratio": t / b}
        return {
            "domains": domains,
            "overall": {
                "base_ppl": self.base["overall"],
                "transplanted_ppl": self.transplanted["overall"],
                "ratio": self.transplanted["overall"] / self.base["overall"],
            },
        }
