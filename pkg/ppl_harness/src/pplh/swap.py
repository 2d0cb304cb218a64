"""Replace a causal LM's embedding matrices with a transplanted tensor file."""

from __future__ import annotations

import torch
from safetensors.torch import load_file

INPUT_EMBED = "embed.input"
OUTPUT_EMBED = "embed.output"


def swap_embeddings(model, tensors_path: str, vocab_size: int, tied: bool):
    """Resize the model to vocab_size and load the transplanted rows.

    The tensor file must hold `embed.input` with exactly vocab_size rows
    and the model's hidden width; untied swaps additionally require
    `embed.output`. Weight tying is re-applied for tied models. Returns
    the patched model.
    """
    tensors = load_file(tensors_path)
    if INPUT_EMBED not in tensors:
        raise ValueError(f"{tensors_path}: missing tensor {INPUT_EMBED!r}")
    new_input = tensors[INPUT_EMBED]
    hidden = model.get_input_embeddings().weight.shape[1]
    if new_input.shape[0] != vocab_size:
        raise ValueError(
            f"{tensors_path}: {INPUT_EMBED} has {new_input.shape[0]} rows, tokenizer has {vocab_size} tokens"
        )
    if new_input.shape[1] != hidden:
        raise ValueError(
            f"{tensors_path}: embedding dim {new_input.shape[1]} does not match model hidden size {hidden}"
        )
    if not tied:
        if OUTPUT_EMBED not in tensors:
            raise ValueError(f"{tensors_path}: untied swap requires tensor {OUTPUT_EMBED!r}")
        inp_w = model.get_input_embeddings().weight
        out_w = model.get_output_embeddings().weight
        if inp_w.data_ptr() == out_w.data_ptr():
            raise ValueError("model has tied embeddings; an untied swap does not apply")

    model.resize_token_embeddings(vocab_size, mean_resizing=False)
    model.config.vocab_size = vocab_size
    with torch.no_grad():
        model.get_input_embeddings().weight.copy_(new_input)
        if not tied:
            out = tensors[OUTPUT_EMBED]
            if out.shape != new_input.shape:
                raise ValueError(f"{tensors_path}: {OUTPUT_EMBED} shape {tuple(out.shape)} mismatch")
            model.get_output_embeddings().weight.copy_(out)
    if tied:
        model.tie_weights()
    return model
