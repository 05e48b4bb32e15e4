"""Versioned binary checkpoints.

Layout: magic "SBND", format version (u32 LE), header length (u64 LE), a
JSON header (model dimensions, vocabulary, inference defaults, optional
training state), then one record per array: name length (u16) + name,
group tag byte, ndim byte, dims (u32 each), raw float64 little-endian
values. Parameter records carry their group; optimizer-state records use
the reserved tag 3. Readers reject unknown versions.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .layers import GROUP_FROZEN, GROUP_RAE, GROUP_RETROFIT
from .model import ModelConfig, TranslationModel

MAGIC = b"SBND"
FORMAT_VERSION = 1

_GROUP_TAGS = {GROUP_RAE: 0, GROUP_RETROFIT: 1, GROUP_FROZEN: 2}
_TAG_GROUPS = {v: k for k, v in _GROUP_TAGS.items()}
_TAG_OPT = 3


def _pack_record(name: str, tag: int, array: np.ndarray) -> bytes:
    name_b = name.encode("utf-8")
    data = np.ascontiguousarray(array, dtype="<f8")
    parts = [struct.pack("<H", len(name_b)), name_b, struct.pack("<BB", tag, data.ndim)]
    parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
    parts.append(data.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def record(self):
        (name_len,) = struct.unpack("<H", self.take(2))
        name = self.take(name_len).decode("utf-8")
        tag, ndim = struct.unpack("<BB", self.take(2))
        dims = struct.unpack(f"<{ndim}I", self.take(4 * ndim))
        count = 1
        for d in dims:
            count *= d
        raw = self.take(8 * count)
        array = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
        return name, tag, array


def save_model(path, model: TranslationModel, train_state: dict | None = None,
               optimizer_arrays: dict[str, np.ndarray] | None = None) -> None:
    """Write a checkpoint; optimizer arrays make the run resumable."""
    records = []
    for p in model.parameters():
        records.append(_pack_record(p.name, _GROUP_TAGS[p.group], p.data))
    for name, arr in (optimizer_arrays or {}).items():
        records.append(_pack_record(name, _TAG_OPT, arr))
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": {
            "action_dim": model.config.action_dim,
            "hidden_dim": model.config.hidden_dim,
            "latent_dim": model.config.latent_dim,
            "embedding_dim": model.config.embedding_dim,
            "retrofit_hidden": model.config.retrofit_hidden,
            "vocab_size": model.config.vocab_size,
            "action_decoder_layers": model.config.action_decoder_layers,
        },
        "vocab": model.vocab_tokens,
        "mean_first_frame": [float(v) for v in model.mean_first_frame],
        "default_action_len": model.default_action_len,
        "max_caption_len": model.max_caption_len,
        "train_state": train_state,
        "record_count": len(records),
    }
    header_b = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_b)))
        fh.write(header_b)
        for rec in records:
            fh.write(rec)


def load_model(path):
    """Read a checkpoint.

    Returns (model, train_state or None, optimizer arrays dict).
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    reader = _Reader(blob)
    reader.pos = 16
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}") from exc

    params: dict[str, tuple[str, np.ndarray]] = {}
    opt_arrays: dict[str, np.ndarray] = {}
    for _ in range(header["record_count"]):
        name, tag, array = reader.record()
        if tag == _TAG_OPT:
            opt_arrays[name] = array
        elif tag in _TAG_GROUPS:
            params[name] = (_TAG_GROUPS[tag], array)
        else:
            raise CheckpointError(f"unknown record tag {tag} in {path}")

    config = ModelConfig(**header["model_config"])
    if "embedding.table" not in params:
        raise CheckpointError("checkpoint is missing the embedding table")
    table = params["embedding.table"][1]
    model = TranslationModel(
        config, table, np.random.default_rng(0),
        vocab_tokens=header.get("vocab"),
        mean_first_frame=np.array(header["mean_first_frame"]),
        default_action_len=header["default_action_len"],
        max_caption_len=header["max_caption_len"])
    for p in model.parameters():
        if p.name not in params:
            raise CheckpointError(f"checkpoint is missing parameter '{p.name}'")
        group, array = params[p.name]
        if group != p.group:
            raise CheckpointError(f"parameter '{p.name}' has group {group}, expected {p.group}")
        if array.shape != p.data.shape:
            raise CheckpointError(
                f"parameter '{p.name}' has shape {array.shape}, expected {p.data.shape}")
        p.tensor.data = array.copy()
    extra = set(params) - {p.name for p in model.parameters()}
    if extra:
        raise CheckpointError(f"checkpoint holds unknown parameters: {sorted(extra)}")
    return model, header.get("train_state"), opt_arrays
