"""Zip-compatible array container with a JSON manifest.

Layout: one raw little-endian binary file per named array plus a
``manifest.json`` recording shape, dtype, and CRC32 for every entry, along
with caller-supplied metadata. Entry timestamps are pinned so identical
contents produce byte-identical files, which the pipeline's determinism
contract relies on.
"""

import json
import zipfile
import zlib

import numpy as np

from .errors import IntegrityError, SchemaError

_EPOCH = (1980, 1, 1, 0, 0, 0)
_MANIFEST = "manifest.json"


def canonical_json(obj) -> str:
    """Stable JSON rendering (sorted keys, no whitespace jitter)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_container(path, arrays: dict, meta: dict | None = None) -> None:
    """Write named arrays plus metadata to ``path``.

    Arrays are stored C-contiguous under ``<name>.bin`` in sorted name
    order. Object dtypes are rejected; use unicode arrays for strings.
    """
    entries = {}
    blobs = {}
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.hasobject:
            raise ValueError(f"array {name!r} has object dtype; not serializable")
        payload = arr.tobytes()
        blobs[name] = payload
        entries[name] = {
            "shape": list(arr.shape),
            "dtype": arr.dtype.str,
            "crc32": zlib.crc32(payload),
        }
    manifest = {"arrays": entries, "meta": meta or {}}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo(_MANIFEST, date_time=_EPOCH)
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, canonical_json(manifest))
        for name in sorted(blobs):
            info = zipfile.ZipInfo(f"{name}.bin", date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, blobs[name])


def read_container(path, required=()) -> tuple[dict, dict]:
    """Read a container; returns (arrays, meta).

    Raises SchemaError when a ``required`` array is absent and
    IntegrityError when a payload fails its manifest CRC.
    """
    with zipfile.ZipFile(path, "r") as zf:
        try:
            manifest = json.loads(zf.read(_MANIFEST))
        except KeyError:
            raise SchemaError(f"{path}: missing {_MANIFEST}") from None
        entries = manifest.get("arrays", {})
        for name in required:
            if name not in entries:
                raise SchemaError(f"{path}: archive missing required array {name!r}")
        arrays = {}
        for name, entry in entries.items():
            payload = zf.read(f"{name}.bin")
            if zlib.crc32(payload) != entry["crc32"]:
                raise IntegrityError(f"{path}: checksum mismatch for array {name!r}")
            arr = np.frombuffer(payload, dtype=np.dtype(entry["dtype"]))
            arrays[name] = arr.reshape(entry["shape"]).copy()
    return arrays, manifest.get("meta", {})
