"""Binary checkpoint format.

Layout: ``RWNN`` magic, u32 version, u32 manifest length, UTF-8 JSON manifest,
then little-endian float32 parameter blobs in manifest order, then the
batch-norm running statistics in manifest order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from renderwait.errors import FormatError
from renderwait.nn.model import Classifier, ModelConfig

MAGIC = b"RWNN"
VERSION = 1


def save_checkpoint(model: Classifier, extra: dict | None = None) -> bytes:
    params = model.named_parameters()
    buffers = model.named_buffers()
    manifest = {
        "config": model.config.to_dict(),
        "parameters": [{"name": n, "shape": list(p.data.shape)} for n, p in params],
        "buffers": [{"name": n, "shape": list(b.shape)} for n, b in buffers],
        "extra": extra or {},
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(head)), head]
    chunks += [np.ascontiguousarray(p.data, dtype="<f4").tobytes() for _, p in params]
    chunks += [np.ascontiguousarray(b, dtype="<f4").tobytes() for _, b in buffers]
    return b"".join(chunks)


def read_manifest(blob: bytes) -> tuple[dict, int]:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError("not a renderwait checkpoint (bad magic)")
    version, length = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if len(blob) < 12 + length:
        raise FormatError("checkpoint truncated inside manifest")
    try:
        manifest = json.loads(blob[12 : 12 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint manifest: {exc}") from exc
    return manifest, 12 + length


def load_checkpoint(blob: bytes) -> Classifier:
    manifest, offset = read_manifest(blob)
    model = Classifier(ModelConfig.from_dict(manifest["config"]))
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    if [e["name"] for e in manifest["parameters"]] != list(params):
        raise FormatError("checkpoint parameters do not match the model layout")

    def take(shape: list[int]) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(blob):
            raise FormatError("checkpoint truncated inside tensor data")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).astype(np.float32).reshape(shape)
        offset = end
        return arr

    for entry in manifest["parameters"]:
        p = params[entry["name"]]
        if list(p.data.shape) != entry["shape"]:
            raise FormatError(f"shape mismatch for {entry['name']}")
        p.data = take(entry["shape"])
    for entry in manifest["buffers"]:
        buf = buffers.get(entry["name"])
        if buf is None or list(buf.shape) != entry["shape"]:
            raise FormatError(f"unexpected buffer {entry['name']}")
        buf[...] = take(entry["shape"])
    if offset != len(blob):
        raise FormatError("trailing bytes after checkpoint data")
    model.eval()
    return model


def checkpoint_extra(blob: bytes) -> dict:
    return read_manifest(blob)[0].get("extra", {})
