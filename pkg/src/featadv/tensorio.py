"""Binary tensor container and content-hashed weight directories.

Container layout, per tensor file: 8-byte magic ``FVADV1\\0\\0``, little-endian
u32 rank, rank little-endian u32 dims, then row-major float32 data. A weight
directory holds one such file per parameter plus ``manifest.json`` naming each
file, its shape, its sha256, and a combined content hash.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import InputError, StoreError

MAGIC = b"FVADV1\x00\x00"


def write_tensor(path, tensor) -> None:
    """Serialize a float tensor. Values are cast to float32; integer or
    non-float inputs are rejected so weights survive a round trip bit-exactly.
    """
    if isinstance(tensor, torch.Tensor):
        if not tensor.dtype.is_floating_point:
            raise InputError(f"container stores float tensors only, got {tensor.dtype}")
        arr = tensor.detach().cpu().to(torch.float32).numpy()
    else:
        arr = np.asarray(tensor, dtype=np.float32)
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            f.write(struct.pack("<I", d))
        f.write(np.ascontiguousarray(arr).tobytes())


def read_tensor(path) -> torch.Tensor:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise StoreError(f"{path}: bad magic, not a tensor container")
    (rank,) = struct.unpack_from("<I", blob, 8)
    if rank > 8:
        raise StoreError(f"{path}: implausible rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", blob, 12)
    offset = 12 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    expected = offset + 4 * count
    if len(blob) != expected:
        raise StoreError(f"{path}: size {len(blob)} != expected {expected}")
    arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return torch.from_numpy(arr.copy()).reshape(dims)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _safe_name(key: str) -> str:
    return key.replace("/", "_").replace("\\", "_") + ".fvt"


def save_state_dict(dirpath, state_dict, architecture: str, extra=None) -> str:
    """Write one container file per parameter plus a manifest.

    Returns the combined content hash (sha256 over sorted per-file hashes).
    """
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    entries = {}
    for key in sorted(state_dict):
        tensor = state_dict[key]
        fname = _safe_name(key)
        write_tensor(dirpath / fname, tensor)
        entries[key] = {
            "file": fname,
            "shape": list(tensor.shape),
            "sha256": _sha256_file(dirpath / fname),
        }
    combined = hashlib.sha256(
        "".join(entries[k]["sha256"] for k in sorted(entries)).encode()
    ).hexdigest()
    manifest = {
        "architecture": architecture,
        "content_hash": combined,
        "tensors": entries,
    }
    if extra:
        manifest["extra"] = extra
    tmp = dirpath / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    tmp.replace(dirpath / "manifest.json")
    return combined


def load_manifest(dirpath) -> dict:
    path = Path(dirpath) / "manifest.json"
    if not path.exists():
        raise StoreError(f"no manifest.json under {dirpath}")
    return json.loads(path.read_text())


def load_state_dict(dirpath, verify=True) -> dict:
    """Read every tensor named by the manifest; optionally verify hashes."""
    dirpath = Path(dirpath)
    manifest = load_manifest(dirpath)
    out = {}
    for key, entry in manifest["tensors"].items():
        fpath = dirpath / entry["file"]
        if verify and _sha256_file(fpath) != entry["sha256"]:
            raise StoreError(f"{fpath}: content hash mismatch")
        tensor = read_tensor(fpath)
        if list(tensor.shape) != entry["shape"]:
            raise StoreError(f"{fpath}: shape {list(tensor.shape)} != manifest")
        out[key] = tensor
    return out


def canonical_json(obj) -> str:
    """Stable serialization used for content addressing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_id(obj) -> str:
    """16-hex-char id of a JSON-serializable object."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]
