"""Model checkpoints.

Binary layout, all little-endian:

    magic "USND" | u16 version = 1 | u8 num_classes
    u32 metadata length | that many bytes of UTF-8 JSON
    per tensor: u16 name length | name | u8 rank | rank * u32 dims | f32 data

Tensors appear in a fixed order (params in insertion order, then running
stats), and the JSON is dumped with sorted keys, so saving a loaded
checkpoint reproduces the file byte for byte.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ConvBlockConfig, Model, ModelConfig, init_params

MAGIC = b"USND"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    num_classes: int
    metadata: dict
    tensors: dict  # name -> float32 ndarray


def _config_to_meta(config):
    return {
        "num_classes": config.num_classes,
        "in_channels": config.in_channels,
        "blocks": [
            {"out_filters": b.out_filters, "kernel": list(b.kernel),
             "padding": list(b.padding), "stride": list(b.stride)}
            for b in config.blocks
        ],
        "pool_grid": list(config.pool_grid),
        "fc_hidden": config.fc_hidden,
    }


def _config_from_meta(meta):
    blocks = tuple(
        ConvBlockConfig(out_filters=b["out_filters"], kernel=tuple(b["kernel"]),
                        padding=tuple(b["padding"]), stride=tuple(b["stride"]))
        for b in meta["blocks"]
    )
    return ModelConfig(num_classes=meta["num_classes"], in_channels=meta["in_channels"],
                       blocks=blocks, pool_grid=tuple(meta["pool_grid"]),
                       fc_hidden=meta["fc_hidden"])


def save_checkpoint(path, model, metadata=None):
    """Write model params + running stats. Extra metadata (seed, epoch, class
    subset, ...) merges into the stored JSON; tensors are cast to float32."""
    meta = dict(metadata or {})
    meta["model_config"] = _config_to_meta(model.config)
    meta["bn_updates"] = model.bn_updates
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")

    parts = [MAGIC, struct.pack("<HB", VERSION, model.config.num_classes),
             struct.pack("<I", len(blob)), blob]
    for name, tensor in list(model.params.items()) + list(model.running.items()):
        enc = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        parts.append(struct.pack("<H", len(enc)))
        parts.append(enc)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    blob = Path(path).read_bytes()
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version, k = r.unpack("<HB")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (meta_len,) = r.unpack("<I")
    try:
        metadata = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad metadata block: {exc}") from None

    tensors = {}
    while r.pos < len(blob):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).copy()
        tensors[name] = data
    return Checkpoint(num_classes=k, metadata=metadata, tensors=tensors)


def restore_model(checkpoint):
    """Rebuild a float32 Model from a loaded checkpoint, validating every
    tensor shape against the stored config."""
    meta = checkpoint.metadata
    if "model_config" not in meta:
        raise CheckpointError("checkpoint metadata lacks a model config")
    config = _config_from_meta(meta["model_config"])
    if config.num_classes != checkpoint.num_classes:
        raise CheckpointError(
            f"header says {checkpoint.num_classes} classes, config says "
            f"{config.num_classes}"
        )
    template = init_params(config, seed=0, dtype=np.float32)
    params, running = {}, {}
    for target, source in ((params, template.params), (running, template.running)):
        for name, ref in source.items():
            if name not in checkpoint.tensors:
                raise CheckpointError(f"checkpoint is missing tensor {name}")
            t = checkpoint.tensors[name]
            if t.shape != ref.shape:
                raise CheckpointError(
                    f"tensor {name} has shape {t.shape}, config implies {ref.shape}"
                )
            target[name] = t.copy()
    return Model(config=config, params=params, running=running, dtype=np.dtype(np.float32),
                 bn_updates=int(meta.get("bn_updates", 0)))
