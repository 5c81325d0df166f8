"""Named weight collection and the portable binary weight file.

File layout (little-endian throughout):

* 4 magic bytes ``TGW1``;
* an unsigned 64-bit header length;
* a UTF-8 JSON header ``{"tensors": {name: {"dtype": "f32", "shape": [...],
  "offset": ..., "byte_length": ...}}, "meta": {...}}``;
* a raw data region of IEEE-754 float32 values, row-major, with each
  tensor's offset relative to the region start and 8-byte aligned.

Export then load is bit-identical. Loading against a graph validates the
name set and every shape; each corruption mode raises its own exception
class naming the offender.
"""

import json
import struct

import numpy as np

from .errors import (
    MissingWeightError,
    UnexpectedWeightError,
    WeightFileCorruptError,
    WeightFileTruncatedError,
    WeightShapeError,
)

MAGIC = b"TGW1"
_ALIGN = 8


class WeightStore:
    """Mapping of weight name to float32 array, with a trainable tag each."""

    def __init__(self):
        self._tensors = {}
        self._trainable = {}

    def add(self, name, array, trainable):
        arr = np.ascontiguousarray(array, dtype=np.float32)
        self._tensors[name] = arr
        self._trainable[name] = bool(trainable)

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def is_trainable(self, name):
        return self._trainable[name]

    def set(self, name, array):
        """Replace an existing tensor's values (shape must match)."""
        cur = self._tensors[name]
        arr = np.ascontiguousarray(array, dtype=np.float32)
        if arr.shape != cur.shape:
            raise WeightShapeError(
                f"weight {name!r}: cannot replace shape {cur.shape} with {arr.shape}"
            )
        self._tensors[name] = arr

    def copy(self):
        out = WeightStore()
        for name, arr in self._tensors.items():
            out.add(name, arr.copy(), self._trainable[name])
        return out

    def element_count(self):
        return sum(int(a.size) for a in self._tensors.values())

    def validate_against(self, g):
        """Check this store covers exactly the graph's bindings, shapes included."""
        specs = {ws.name: ws for ws in g.weight_specs()}
        for name in specs:
            if name not in self._tensors:
                raise MissingWeightError(f"weight file is missing tensor {name!r}")
        for name in self._tensors:
            if name not in specs:
                raise UnexpectedWeightError(f"weight file has extra tensor {name!r}")
        for name, ws in specs.items():
            got = tuple(self._tensors[name].shape)
            if got != tuple(ws.shape):
                raise WeightShapeError(
                    f"weight {name!r} has shape {got}, graph expects {tuple(ws.shape)}"
                )


def write_weight_file(path, tensors, meta=None):
    """Serialize ``tensors`` (name -> float32 array), sorted by name.

    Sorting makes the file canonical: exporting a store always produces the
    same bytes regardless of how the store was assembled.
    """
    entries = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name]
        a = np.ascontiguousarray(arr, dtype=np.float32)
        pad = (-offset) % _ALIGN
        offset += pad
        blobs.append((pad, a))
        entries[name] = {
            "dtype": "f32",
            "shape": [int(s) for s in a.shape],
            "offset": offset,
            "byte_length": int(a.nbytes),
        }
        offset += a.nbytes
    header = json.dumps(
        {"tensors": entries, "meta": meta or {}},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for pad, a in blobs:
            if pad:
                fh.write(b"\x00" * pad)
            fh.write(a.astype("<f4", copy=False).tobytes())


def read_weight_file(path):
    """Parse a weight file; returns (tensors dict, meta dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise WeightFileCorruptError(f"{path}: corrupt header (bad magic bytes)")
    (header_len,) = struct.unpack("<Q", raw[4:12])
    header_end = 12 + header_len
    if header_end > len(raw):
        raise WeightFileCorruptError(f"{path}: corrupt header (length exceeds file)")
    try:
        header = json.loads(raw[12:header_end].decode("utf-8"))
        entries = header["tensors"]
        meta = header.get("meta", {})
        items = [
            (name, e["dtype"], [int(s) for s in e["shape"]], int(e["offset"]),
             int(e["byte_length"]))
            for name, e in entries.items()
        ]
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise WeightFileCorruptError(f"{path}: corrupt header ({exc})") from None

    data = raw[header_end:]
    tensors = {}
    for name, dtype, shape, offset, nbytes in items:
        if dtype != "f32":
            raise WeightFileCorruptError(f"{path}: tensor {name!r} has unsupported dtype {dtype!r}")
        expected = int(np.prod(shape)) * 4 if shape else 4
        if nbytes != expected:
            raise WeightFileCorruptError(
                f"{path}: tensor {name!r} byte_length {nbytes} does not match shape {shape}"
            )
        if offset % _ALIGN:
            raise WeightFileCorruptError(f"{path}: tensor {name!r} offset {offset} not 8-byte aligned")
        if offset + nbytes > len(data):
            raise WeightFileTruncatedError(
                f"{path}: truncated data region, tensor {name!r} needs bytes "
                f"[{offset}, {offset + nbytes}) of {len(data)}"
            )
        arr = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=offset)
        tensors[name] = arr.reshape(shape).copy()
    return tensors, meta


def export_weights(store, path, meta=None):
    """Write a WeightStore to the portable format (bit-exact round trip)."""
    write_weight_file(path, dict(store.items()), meta=meta)


def store_from_tensors(g, tensors):
    """Wrap pre-read tensors in a WeightStore validated against ``g``."""
    specs = {ws.name: ws for ws in g.weight_specs()}
    store = WeightStore()
    for name, arr in tensors.items():
        store.add(name, arr, trainable=specs[name].trainable if name in specs else True)
    store.validate_against(g)
    return store


def load_weights(g, path):
    """Read a weight file and validate it against ``g``. Returns a WeightStore."""
    tensors, _ = read_weight_file(path)
    return store_from_tensors(g, tensors)
