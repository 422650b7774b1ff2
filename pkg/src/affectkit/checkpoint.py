"""Self-describing checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 header length, a UTF-8
JSON header (config snapshot, run metadata, tensor directory), then the
concatenated float32 little-endian C-order payloads. Only floating-point
state is persisted; that is everything inference depends on.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

MAGIC = b"AKCKPT01"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    meta: dict
    tensors: dict  # name -> np.ndarray float32

    @property
    def step(self) -> int:
        return int(self.meta.get("step", 0))

    @property
    def best_metric(self):
        return self.meta.get("best_metric")


def save_checkpoint(path, tensors, config: dict, meta: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    payloads = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name]
        if isinstance(arr, torch.Tensor):
            arr = arr.detach().cpu().numpy()
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": offset, "numel": int(arr.size)})
        payloads.append(arr.tobytes(order="C"))
        offset += arr.size
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config": config, "meta": meta,
         "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    tensors = {}
    for entry in header["tensors"]:
        start = entry["offset"] * 4
        stop = start + entry["numel"] * 4
        if stop > len(payload):
            raise ValueError(f"{path}: truncated payload for tensor {entry['name']}")
        flat = np.frombuffer(payload[start:stop], dtype="<f4")
        tensors[entry["name"]] = flat.reshape(entry["shape"]).copy()
    return Checkpoint(config=header["config"], meta=header["meta"], tensors=tensors)


def module_float_state(module: torch.nn.Module, prefix: str = "") -> dict:
    """Floating-point parameters and buffers of a module, as numpy arrays."""
    out = {}
    for name, tensor in module.state_dict().items():
        if tensor.is_floating_point():
            out[prefix + name] = tensor.detach().cpu().numpy().astype(np.float32)
    return out


def load_module_state(module: torch.nn.Module, tensors: dict, prefix: str = "") -> None:
    """Load float tensors back into a module; every float entry of the module
    must be present, with matching shape."""
    state = {}
    for name, tensor in module.state_dict().items():
        if not tensor.is_floating_point():
            continue
        key = prefix + name
        if key not in tensors:
            raise ValueError(f"checkpoint missing tensor {key}")
        arr = tensors[key]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise ValueError(
                f"shape mismatch for {key}: checkpoint {tuple(arr.shape)}, "
                f"module {tuple(tensor.shape)}"
            )
        state[name] = torch.from_numpy(np.ascontiguousarray(arr)).to(tensor.dtype)
    module.load_state_dict(state, strict=False)
