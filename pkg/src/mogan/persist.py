"""Model container serialization.

Layout: 6-byte magic "MOGAN1", little-endian uint32 manifest length, a
JSON manifest (format version, network kind, architecture config,
training metadata, tensor table), then the payload of concatenated
little-endian float32 arrays.  Training runs in float64; the 32-bit
payload halves the file and load() restores exactly the saved 32-bit
values.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"MOGAN1"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class BadMagicError(ModelFormatError):
    pass


class TruncatedPayloadError(ModelFormatError):
    pass


class ShapeMismatchError(ModelFormatError):
    pass


class KindMismatchError(ModelFormatError):
    pass


def _network_classes():
    from .generator import GeneratorNet
    from .refiner import DiscriminatorNet, RefinerNet

    return {"generator": GeneratorNet, "refiner": RefinerNet,
            "discriminator": DiscriminatorNet}


def save_model(net, path: str | Path, meta: dict | None = None) -> None:
    """Write the container atomically (temp file + rename)."""
    path = Path(path)
    tensors = []
    chunks = []
    offset = 0
    for name, block in net.blocks().items():
        if not np.all(np.isfinite(block.value)):
            raise ValueError(f"non-finite parameter {name}")
        data = block.value.astype("<f4").tobytes()
        tensors.append({"name": name, "shape": list(block.value.shape),
                        "dtype": "<f4", "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": net.kind,
        "config": net.config(),
        "meta": meta or {},
        "tensors": tensors,
    }
    blob = json.dumps(manifest).encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                               prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            for c in chunks:
                f.write(c)
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"failed writing model to {path}: {e}") from e


def read_manifest(path: str | Path) -> tuple[dict, bytes]:
    with open(path, "rb") as f:
        head = f.read(len(MAGIC))
        if head != MAGIC:
            raise BadMagicError(f"{path}: bad magic {head!r}")
        (n,) = struct.unpack("<I", f.read(4))
        manifest = json.loads(f.read(n))
        payload = f.read()
    ends = [t["offset"] + t["nbytes"] for t in manifest["tensors"]]
    if ends and max(ends) > len(payload):
        raise TruncatedPayloadError(
            f"{path}: payload {len(payload)} bytes, manifest needs {max(ends)}")
    spans = sorted((t["offset"], t["offset"] + t["nbytes"])
                   for t in manifest["tensors"])
    for (_, e1), (s2, _) in zip(spans, spans[1:]):
        if s2 < e1:
            raise ModelFormatError(f"{path}: overlapping tensors in manifest")
    return manifest, payload


def load_model(path: str | Path, expect_kind: str | None = None):
    """Rebuild a network from a container file."""
    manifest, payload = read_manifest(path)
    kind = manifest.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise KindMismatchError(f"{path}: contains a {kind!r} model, "
                                f"expected {expect_kind!r}")
    classes = _network_classes()
    if kind not in classes:
        raise ModelFormatError(f"{path}: unknown network kind {kind!r}")
    net = classes[kind].from_config(manifest["config"])
    blocks = net.blocks()
    seen = set()
    for t in manifest["tensors"]:
        name = t["name"]
        if name not in blocks:
            raise ShapeMismatchError(f"{path}: unexpected tensor {name!r}")
        arr = np.frombuffer(payload[t["offset"]:t["offset"] + t["nbytes"]],
                            dtype="<f4")
        if list(blocks[name].value.shape) != t["shape"] or \
                arr.size != int(np.prod(t["shape"])):
            raise ShapeMismatchError(f"{path}: tensor {name!r} shape mismatch")
        blocks[name].value[...] = arr.reshape(t["shape"]).astype(np.float64)
        seen.add(name)
    missing = set(blocks) - seen
    if missing:
        raise ShapeMismatchError(f"{path}: missing tensors {sorted(missing)}")
    return net
