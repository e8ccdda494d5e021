"""MTDB v1: a bit-exact container for named tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"MTDB"
    version u32      1
    count   u32      number of entries
    entry headers, one per entry:
        name_len u32, name bytes (UTF-8, non-empty, unique)
        dtype    u8  (0 = f32, 1 = f64, 2 = i64)
        rank     u32
        dims     u64 x rank
        payload_len u64  (= product(dims) * dtype width)
    payloads, contiguous row-major, in header order

Trailing bytes after the last payload are rejected. Payloads round-trip
bit-exactly; there is no compression and no alignment padding.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"MTDB"
VERSION = 1

_DTYPE_TAGS = {"f32": 0, "f64": 1, "i64": 2}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_NP_TO_TAG = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


def _as_supported(array: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _NP_TO_TAG:
        raise ValidationError(
            f"unsupported dtype {arr.dtype}; bundle entries must be f32, f64 or i64"
        )
    return arr


@dataclass
class TensorBundle:
    """Ordered, uniquely named tensors. Immutable by convention after construction."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, array: np.ndarray) -> "TensorBundle":
        if not name:
            raise ValidationError("entry name must be non-empty")
        if name in self.entries:
            raise ValidationError(f"duplicate entry name {name!r}")
        self.entries[name] = _as_supported(array)
        return self

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            raise KeyError(f"bundle has no entry {name!r}; present: {sorted(self.entries)}")

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorBundle):
            return NotImplemented
        if list(self.entries) != list(other.entries):
            return False
        return all(
            a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in ((self.entries[k], other.entries[k]) for k in self.entries)
        )


class _CountingSink:
    def __init__(self, sink: BinaryIO):
        self._sink = sink
        self.offset = 0

    def write(self, data: bytes) -> None:
        try:
            self._sink.write(data)
        except OSError as exc:
            raise OSError(f"write failed at byte offset {self.offset}: {exc}") from exc
        self.offset += len(data)


def write_bundle(bundle: TensorBundle, sink: BinaryIO) -> int:
    """Serialize ``bundle`` to ``sink``; returns the number of bytes written."""
    out = _CountingSink(sink)
    out.write(MAGIC)
    out.write(struct.pack("<II", VERSION, len(bundle.entries)))
    for name, arr in bundle.entries.items():
        name_bytes = name.encode("utf-8")
        tag = _NP_TO_TAG[arr.dtype]
        out.write(struct.pack("<I", len(name_bytes)))
        out.write(name_bytes)
        out.write(struct.pack("<BI", tag, arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.write(struct.pack("<Q", arr.nbytes))
    for arr in bundle.entries.values():
        out.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    return out.offset


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise FormatError(f"truncated stream while reading {what} ({len(data)}/{n} bytes)")
    return data


def read_bundle(source: BinaryIO) -> TensorBundle:
    """Parse an MTDB v1 stream; rejects bad magic, mismatched lengths and trailing bytes."""
    magic = _read_exact(source, 4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<II", _read_exact(source, 8, "version/count"))
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")

    headers: list[tuple[str, np.dtype, tuple[int, ...], int]] = []
    names_seen: set[str] = set()
    for i in range(count):
        (name_len,) = struct.unpack("<I", _read_exact(source, 4, f"entry {i} name length"))
        name = _read_exact(source, name_len, f"entry {i} name").decode("utf-8")
        if not name:
            raise FormatError(f"entry {i} has an empty name")
        if name in names_seen:
            raise FormatError(f"duplicate entry name {name!r}")
        names_seen.add(name)
        tag, rank = struct.unpack("<BI", _read_exact(source, 5, f"entry {name!r} dtype/rank"))
        if tag not in _TAG_DTYPES:
            raise FormatError(f"entry {name!r} has unknown dtype tag {tag}")
        dims = struct.unpack(f"<{rank}Q", _read_exact(source, 8 * rank, f"entry {name!r} dims"))
        (payload_len,) = struct.unpack("<Q", _read_exact(source, 8, f"entry {name!r} payload length"))
        dtype = _TAG_DTYPES[tag]
        expected = dtype.itemsize * int(np.prod(dims, dtype=object))
        if payload_len != expected:
            raise FormatError(
                f"entry {name!r}: payload length {payload_len} does not match "
                f"shape {tuple(dims)} x {dtype.itemsize} bytes (= {expected})"
            )
        headers.append((name, dtype, tuple(int(d) for d in dims), payload_len))

    bundle = TensorBundle()
    for name, dtype, dims, payload_len in headers:
        payload = _read_exact(source, payload_len, f"entry {name!r} payload")
        arr = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
        bundle.add(name, arr)
    trailing = source.read(1)
    if trailing:
        raise FormatError("trailing bytes after final payload")
    return bundle


def write_bundle_file(bundle: TensorBundle, path) -> int:
    with open(path, "wb") as fh:
        return write_bundle(bundle, fh)


def read_bundle_file(path) -> TensorBundle:
    with open(path, "rb") as fh:
        return read_bundle(fh)


def bundle_to_bytes(bundle: TensorBundle) -> bytes:
    buf = io.BytesIO()
    write_bundle(bundle, buf)
    return buf.getvalue()


def bundle_from_bytes(data: bytes) -> TensorBundle:
    return read_bundle(io.BytesIO(data))
