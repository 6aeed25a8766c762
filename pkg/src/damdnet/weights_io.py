"""Network weights container.

Layout: magic "DAMDWTS1", uint32 manifest length, UTF-8 JSON manifest (an
ordered list of {name, shape, dtype}), then the concatenated little-endian
raw float payload in manifest order.
"""

import io
import json

import numpy as np

from .errors import DataError

WEIGHTS_MAGIC = b"DAMDWTS1"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_weights(named_arrays, path):
    """named_arrays: iterable of (name, ndarray); order is preserved."""
    manifest = []
    payload = io.BytesIO()
    for name, arr in named_arrays:
        arr = np.asarray(arr)
        dtype = "float64" if arr.dtype == np.float64 else "float32"
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        payload.write(arr.astype(_DTYPES[dtype]).tobytes())
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(payload.getvalue())


def load_weights(path):
    """Returns an ordered dict name -> ndarray."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != WEIGHTS_MAGIC:
        raise DataError(f"{path}: not a DAMDWTS1 weights file")
    hlen = int.from_bytes(raw[8:12], "little")
    try:
        manifest = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt weights manifest ({exc})") from exc
    out = {}
    pos = 12 + hlen
    for entry in manifest:
        try:
            name, shape, dtype = entry["name"], entry["shape"], entry["dtype"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: malformed manifest entry ({entry})") from exc
        if dtype not in _DTYPES:
            raise DataError(f"{path}: unsupported dtype '{dtype}' for '{name}'")
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np.dtype(_DTYPES[dtype]).itemsize
        if pos + nbytes > len(raw):
            raise DataError(f"{path}: payload truncated at tensor '{name}'")
        arr = np.frombuffer(raw, dtype=_DTYPES[dtype], count=count, offset=pos)
        out[name] = arr.reshape(shape).astype(dtype)
        pos += nbytes
    return out
