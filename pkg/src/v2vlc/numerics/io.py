"""Binary tensor files and named-parameter checkpoints.

Tensor file layout (all little-endian)::

    b"V2VT" | version u16 | rank u16 | dims u32 * rank | float32 * prod(dims)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"V2VT"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def encode_tensor(x: Tensor | np.ndarray) -> bytes:
    arr = np.asarray(x.data if isinstance(x, Tensor) else x)
    header = MAGIC + struct.pack("<HH", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(buf: bytes) -> Tensor:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise TensorFormatError("not a V2VT tensor (bad magic)")
    version, rank = struct.unpack_from("<HH", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported V2VT version {version}")
    off = 8
    if len(buf) < off + 4 * rank:
        raise TensorFormatError("truncated V2VT header")
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    n = int(np.prod(dims)) if rank else 1
    if len(buf) != off + 4 * n:
        raise TensorFormatError(f"V2VT payload has {len(buf) - off} bytes, expected {4 * n}")
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(dims)
    return Tensor(data.astype(np.float64))


def save_tensor(path: str | Path, x: Tensor | np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(x))


def load_tensor(path: str | Path) -> Tensor:
    return decode_tensor(Path(path).read_bytes())


def save_checkpoint(directory: str | Path, params: Mapping[str, Tensor], **meta) -> Path:
    """Write one ``.v2vt`` file per parameter plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(params):
        fname = name.replace("/", "__") + ".v2vt"
        save_tensor(directory / fname, params[name])
        entries.append({"name": name, "file": fname, "shape": list(params[name].shape)})
    manifest = {"format": "v2vt-checkpoint", "version": VERSION, "params": entries, **meta}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(directory: str | Path) -> tuple[dict[str, Tensor], dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    params = {}
    for entry in manifest["params"]:
        t = load_tensor(directory / entry["file"])
        if list(t.shape) != entry["shape"]:
            raise TensorFormatError(f"{entry['name']}: manifest shape {entry['shape']} != file {list(t.shape)}")
        params[entry["name"]] = t
    meta = {k: v for k, v in manifest.items() if k != "params"}
    return params, meta
