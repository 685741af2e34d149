"""Binary checkpoint format for encoder (and optional classifier head) weights.

Layout: 4-byte magic, uint32 version, uint32 config-JSON length, config
JSON (utf-8), then raw little-endian float64 arrays in declaration order:
conv weight/bias per stage, fc weight, fc bias, then head W and b when a
head is present. All integers little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, EncoderParams, KERNEL
from .loss import ClassifierHead

MAGIC = b"CMCK"
VERSION = 1


def _config_dict(cfg: EncoderConfig, head_class_ids) -> dict:
    return {
        "activation": cfg.activation,
        "channels_per_stage": list(cfg.channels_per_stage),
        "embed_dim": cfg.embed_dim,
        "head_class_ids": None if head_class_ids is None else list(map(int, head_class_ids)),
        "input_size": cfg.input_size,
    }


def save_checkpoint(path, cfg: EncoderConfig, params: EncoderParams,
                    head: ClassifierHead | None = None,
                    head_class_ids=None) -> None:
    blob = json.dumps(_config_dict(cfg, head_class_ids),
                      sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
        if head is not None:
            fh.write(np.ascontiguousarray(head.W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(head.b, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (cfg, params, head_or_None, head_class_ids_or_None)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint: {path}")
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        meta = json.loads(fh.read(blob_len).decode("utf-8"))
        cfg = EncoderConfig(input_size=meta["input_size"],
                            channels_per_stage=tuple(meta["channels_per_stage"]),
                            embed_dim=meta["embed_dim"],
                            activation=meta["activation"])

        def read_array(shape):
            n = int(np.prod(shape))
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"truncated checkpoint: {path}")
            return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

        params = EncoderParams()
        c_in = 3
        for c_out in cfg.channels_per_stage:
            params.conv_w.append(read_array((c_out, c_in, KERNEL, KERNEL)))
            params.conv_b.append(read_array((c_out,)))
            c_in = c_out
        params.fc_w = read_array((cfg.embed_dim, c_in))
        params.fc_b = read_array((cfg.embed_dim,))

        head = None
        class_ids = meta.get("head_class_ids")
        if class_ids is not None:
            w = read_array((cfg.embed_dim, len(class_ids)))
            b = read_array((len(class_ids),))
            head = ClassifierHead(W=w, b=b)
        return cfg, params, head, class_ids
