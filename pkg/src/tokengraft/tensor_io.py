"""Bit-exact tensor file reading/writing for embedding matrices.

Layout: 8-byte little-endian header length, a JSON header mapping tensor
names to {"dtype": "F32", "shape": [...], "data_offsets": [begin, end]},
then the raw little-endian payload. Offsets are relative to the payload
start and must tile it exactly. This matches the de-facto interchange
format for model weights, so downstream tooling can consume the output
directly. Only F32 is supported here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from tokengraft.errors import (
    ConfigError,
    TensorDtypeError,
    TensorFormatError,
    TensorOffsetError,
    TensorTruncationError,
)

INPUT_EMBED = "embed.input"
OUTPUT_EMBED = "embed.output"


@dataclass
class EmbeddingMatrix:
    """Row-per-token f32 matrix, one of the model's embedding tables."""

    data: np.ndarray
    role: str = "input"

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ConfigError(f"embedding matrix must be 2-D, got shape {self.data.shape}")
        if self.data.dtype != np.float32:
            raise ConfigError(f"embedding matrix must be float32, got {self.data.dtype}")
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("embedding matrix contains non-finite entries")

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


def write_tensors(tensors: dict[str, np.ndarray], path: str) -> None:
    """Serialize named f32 arrays; deterministic bytes for identical input.

    Tensor names are written in sorted order and the header JSON uses sorted
    keys with no whitespace, so equal inputs always produce equal files.
    """
    header: dict[str, dict] = {}
    chunks: list[bytes] = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name]
        if arr.dtype != np.float32:
            raise ConfigError(f"tensor {name!r} must be float32, got {arr.dtype}")
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        header[name] = {
            "dtype": "F32",
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        chunks.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(len(header_bytes).to_bytes(8, "little"))
        f.write(header_bytes)
        for raw in chunks:
            f.write(raw)


def read_tensors(path: str) -> dict[str, np.ndarray]:
    """Parse a tensor file back into f32 arrays, validating the byte layout."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8:
        raise TensorTruncationError(f"{path}: file shorter than the 8-byte header length")
    header_len = int.from_bytes(data[:8], "little")
    if 8 + header_len > len(data):
        raise TensorTruncationError(f"{path}: declared header length {header_len} exceeds file size")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"{path}: header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise TensorFormatError(f"{path}: header must be a JSON object")
    header.pop("__metadata__", None)

    payload = data[8 + header_len :]
    ranges: list[tuple[int, int, str]] = []
    tensors: dict[str, np.ndarray] = {}
    for name, entry in header.items():
        if not isinstance(entry, dict):
            raise TensorFormatError(f"{path}: tensor {name!r} entry must be an object")
        dtype = entry.get("dtype")
        if dtype != "F32":
            raise TensorDtypeError(f"{path}: tensor {name!r} has dtype {dtype!r}, only F32 is supported")
        shape = entry.get("shape")
        if not (isinstance(shape, list) and all(isinstance(s, int) and s >= 0 for s in shape)):
            raise TensorFormatError(f"{path}: tensor {name!r} has invalid shape {shape!r}")
        offsets = entry.get("data_offsets")
        if not (isinstance(offsets, list) and len(offsets) == 2 and all(isinstance(o, int) for o in offsets)):
            raise TensorFormatError(f"{path}: tensor {name!r} has invalid data_offsets {offsets!r}")
        begin, end = offsets
        expected = math.prod(shape) * 4
        if begin < 0 or end < begin:
            raise TensorOffsetError(f"{path}: tensor {name!r} has negative or inverted offsets {offsets!r}")
        if end - begin != expected:
            raise TensorOffsetError(
                f"{path}: tensor {name!r} byte range {end - begin} does not match shape {shape} ({expected} bytes)"
            )
        if end > len(payload):
            raise TensorTruncationError(f"{path}: tensor {name!r} extends past end of file")
        ranges.append((begin, end, name))

    ranges.sort()
    cursor = 0
    for begin, end, name in ranges:
        if begin < cursor:
            raise TensorOffsetError(f"{path}: tensor {name!r} overlaps the previous byte range")
        if begin > cursor:
            raise TensorOffsetError(f"{path}: gap before tensor {name!r}: payload bytes must tile exactly")
        cursor = end
    if cursor != len(payload):
        raise TensorOffsetError(f"{path}: payload has {len(payload) - cursor} trailing bytes not covered by any tensor")

    for name, entry in header.items():
        begin, end = entry["data_offsets"]
        arr = np.frombuffer(payload[begin:end], dtype="<f4").reshape(entry["shape"]).copy()
        tensors[name] = arr
    return tensors


def read_embeddings(path: str) -> tuple[EmbeddingMatrix, EmbeddingMatrix | None]:
    """Load the conventional embed.input / embed.output pair from a tensor file."""
    tensors = read_tensors(path)
    if INPUT_EMBED not in tensors:
        raise TensorFormatError(f"{path}: missing required tensor {INPUT_EMBED!r}")
    inp = EmbeddingMatrix(tensors[INPUT_EMBED], role="input")
    out = None
    if OUTPUT_EMBED in tensors:
        out = EmbeddingMatrix(tensors[OUTPUT_EMBED], role="output")
    return inp, out


def write_embeddings(path: str, inp: EmbeddingMatrix, out: EmbeddingMatrix | None = None) -> None:
    tensors = {INPUT_EMBED: inp.data}
    if out is not None:
        tensors[OUTPUT_EMBED] = out.data
    write_tensors(tensors, path)
