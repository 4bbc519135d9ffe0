"""The ``.psrc`` binary container: named typed arrays plus string metadata.

Layout (all integers little-endian)::

    b"PSRC" | version u16 | count u16
    per array: name_len u8 | name utf-8 | dtype u8 | ndim u8 | dims u64 * ndim | payload
    meta_count u16 | per pair: key_len u16 | key | value_len u16 | value

dtype codes: 0 complex128 (interleaved re/im), 1 float64, 2 bool (one byte).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .fileio import atomic_write_bytes
from .simulator import SimulatedDataset
from .subspace import NavigatorCasorati

__all__ = [
    "MAGIC",
    "VERSION",
    "Container",
    "ContainerError",
    "write_container",
    "read_container",
    "encode",
    "decode",
    "dataset_to_container",
    "dataset_from_container",
    "image_from_container",
]

MAGIC = b"PSRC"
VERSION = 1

_CODES = {0: np.dtype("<c16"), 1: np.dtype("<f8"), 2: np.dtype("u1")}


class ContainerError(ValueError):
    """Malformed container; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass
class Container:
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.arrays[name]

    def __contains__(self, name):
        return name in self.arrays


def _code_for(arr: np.ndarray) -> tuple[int, np.ndarray]:
    if arr.dtype == np.bool_:
        return 2, arr.astype(np.uint8)
    if np.iscomplexobj(arr):
        return 0, arr.astype("<c16")
    if arr.dtype.kind in "fiu":
        return 1, arr.astype("<f8")
    raise TypeError(f"unsupported dtype {arr.dtype}")


def _short_str(s: str, width: str, what: str) -> bytes:
    b = s.encode("utf-8")
    limit = 0xFF if width == "B" else 0xFFFF
    if len(b) > limit:
        raise ValueError(f"{what} longer than {limit} bytes")
    return struct.pack("<" + width, len(b)) + b


def encode(arrays: dict, metadata: dict | None = None) -> bytes:
    """Serialise arrays and metadata to container bytes."""
    metadata = metadata or {}
    if len(arrays) > 0xFFFF or len(metadata) > 0xFFFF:
        raise ValueError("too many entries for a container")
    parts = [MAGIC, struct.pack("<HH", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.ndim > 0xFF:
            raise ValueError(f"array {name!r} has too many dimensions")
        code, data = _code_for(arr)
        parts.append(_short_str(name, "B", "array name"))
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(data).tobytes(order="C"))
    parts.append(struct.pack("<H", len(metadata)))
    for key, value in metadata.items():
        parts.append(_short_str(str(key), "H", "metadata key"))
        parts.append(_short_str(str(value), "H", "metadata value"))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        have = len(self.buf) - self.pos
        if n > have:
            raise ContainerError(f"truncated {what}: expected {n} bytes, found {have}", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def text(self, n: int, what: str) -> str:
        start = self.pos
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerError(f"{what} is not valid UTF-8", start) from exc


def decode(buf: bytes) -> Container:
    """Parse container bytes; raises :class:`ContainerError` on malformed input."""
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}", 4)
    (count,) = r.unpack("<H", "array count")
    out = Container()
    for _ in range(count):
        start = r.pos
        (nlen,) = r.unpack("<B", "array name length")
        name = r.text(nlen, "array name")
        if name in out.arrays:
            raise ContainerError(f"duplicate array name {name!r}", start)
        code_pos = r.pos
        code, ndim = r.unpack("<BB", "array header")
        if code not in _CODES:
            raise ContainerError(f"unknown dtype code {code} for {name!r}", code_pos)
        shape = r.unpack(f"<{ndim}Q", f"dims of {name!r}")
        dtype = _CODES[code]
        nbytes = int(np.prod(shape, dtype=np.uint64)) * dtype.itemsize
        payload = r.take(nbytes, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
        if code == 2:
            if np.any(arr > 1):
                raise ContainerError(f"bool array {name!r} holds bytes other than 0/1", r.pos - nbytes)
            arr = arr.astype(bool)
        else:
            arr = arr.astype(dtype.newbyteorder("="))
        out.arrays[name] = arr
    (mcount,) = r.unpack("<H", "metadata count")
    for _ in range(mcount):
        (klen,) = r.unpack("<H", "metadata key length")
        key = r.text(klen, "metadata key")
        (vlen,) = r.unpack("<H", "metadata value length")
        out.metadata[key] = r.text(vlen, "metadata value")
    if r.pos != len(buf):
        raise ContainerError(f"{len(buf) - r.pos} trailing bytes after metadata", r.pos)
    return out


def write_container(path, arrays: dict, metadata: dict | None = None) -> None:
    atomic_write_bytes(path, encode(arrays, metadata))


def read_container(path) -> Container:
    with open(path, "rb") as fh:
        return decode(fh.read())


# -- dataset / reconstruction conversions ---------------------------------


def dataset_to_container(ds: SimulatedDataset) -> Container:
    """Arrays and metadata for a :class:`~psrt.simulator.SimulatedDataset`."""
    arrays = {
        "kspace": ds.kspace,
        "mask": np.asarray(ds.mask, dtype=bool),
        "nav": ds.nav.data,
        "nav_frame_map": ds.nav.frame_map.astype(np.float64),
    }
    if ds.sens is not None:
        arrays["sens"] = ds.sens
    if ds.truth is not None:
        arrays["truth"] = ds.truth
    if ds.schedule is not None:
        arrays["schedule"] = ds.schedule.astype(np.float64)
    meta = {"kind": "dataset", "sigma2": repr(float(ds.sigma2))}
    meta.update({k: repr(v) if isinstance(v, float) else str(v) for k, v in ds.meta.items()})
    return Container(arrays, meta)


def _as_int(arr, name):
    out = arr.astype(np.int64)
    if not np.array_equal(out, arr):
        raise ValueError(f"array {name!r} must hold integers")
    return out


def dataset_from_container(c: Container) -> SimulatedDataset:
    for name in ("kspace", "mask", "nav", "nav_frame_map"):
        if name not in c:
            raise ValueError(f"container lacks required array {name!r}")
    meta = {}
    for k, v in c.metadata.items():
        if k in ("kind", "sigma2"):
            continue
        try:
            meta[k] = float(v)
        except ValueError:
            meta[k] = v
    nav = NavigatorCasorati(c["nav"], _as_int(c["nav_frame_map"], "nav_frame_map"))
    return SimulatedDataset(
        kspace=c["kspace"],
        mask=c["mask"],
        nav=nav,
        sens=c.arrays.get("sens"),
        truth=c.arrays.get("truth"),
        sigma2=float(c.metadata.get("sigma2", 0.0)),
        schedule=_as_int(c["schedule"], "schedule") if "schedule" in c else None,
        meta=meta,
    )


def image_from_container(c: Container) -> tuple[np.ndarray, tuple[int, int]]:
    """The ``(N, T)`` image held by a reconstruction or dataset container, with its grid."""
    if "image" in c:
        img = c["image"]
    elif "truth" in c:
        img = c["truth"]
    else:
        raise ValueError("container holds neither 'image' nor 'truth'")
    if "nx" in c.metadata and "ny" in c.metadata:
        shape = (int(c.metadata["nx"]), int(c.metadata["ny"]))
    elif "kspace" in c:
        shape = tuple(c["kspace"].shape[1:3])
    else:
        raise ValueError("container does not record the image grid")
    if shape[0] * shape[1] != img.shape[0]:
        raise ValueError(f"grid {shape} does not match {img.shape[0]} image rows")
    return img, shape
