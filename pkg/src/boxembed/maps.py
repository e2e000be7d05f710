"""Dense per-pixel containers and the DTEN binary tensor format.

DTEN layout (all integers little-endian)::

    magic   4 bytes   b"DTEN"
    version u8        1
    dtype   u8        0 = float32, 1 = uint8, 2 = uint32
    ndim    u16
    dims    ndim x u32
    payload row-major, little-endian

Which map type a file holds is implied by dtype and shape:

=========  ========  ====================
dtype      shape     type
=========  ========  ====================
float32    (H, W)    :class:`ProbMap`
float32    (H, W, 4) :class:`OffsetMap`
uint8      (H, W)    :class:`ValidityMask`
uint32     (H, W)    :class:`InstanceLabelMap`
=========  ========  ====================
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Union

import numpy as np

MAGIC = b"DTEN"
VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("<u4")}


class TensorFormatError(ValueError):
    """Base class for DTEN parse and validation failures."""


class BadMagicError(TensorFormatError):
    pass


class UnsupportedFormatError(TensorFormatError):
    """Unknown version, dtype code, or a dtype/shape combination with no map type."""


class LengthMismatchError(TensorFormatError):
    pass


class NonFiniteError(TensorFormatError):
    pass


class MapInvariantError(TensorFormatError):
    """Shape or value-range violation of a map type."""


def _check_2d(data: np.ndarray, name: str) -> None:
    if data.ndim != 2:
        raise MapInvariantError(f"{name} must be 2-D, got shape {data.shape}")


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-pixel person probability, float32 ``(H, W)`` in ``[0, 1]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, order="C")
        _check_2d(data, "ProbMap")
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("ProbMap contains non-finite values")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise MapInvariantError("ProbMap values must lie in [0, 1]")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        return type(other) is type(self) and _bit_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class OffsetMap:
    """Per-pixel ``(dx, dy, dw, dh)``, float32 ``(H, W, 4)``, channel-last."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, order="C")
        if data.ndim != 3 or data.shape[2] != 4:
            raise MapInvariantError(f"OffsetMap must have shape (H, W, 4), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("OffsetMap contains non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def __eq__(self, other):
        return type(other) is type(self) and _bit_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class ValidityMask:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.bool_:
            if data.size and not np.isin(data, (0, 1)).all():
                raise MapInvariantError("ValidityMask values must be 0 or 1")
            data = data.astype(np.bool_)
        data = np.array(data, order="C")
        _check_2d(data, "ValidityMask")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class InstanceLabelMap:
    """Instance ids per pixel, uint32 ``(H, W)``; 0 is background.

    Ids must form the contiguous range ``0..M`` (every id in ``1..max`` used).
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype.kind == "f" or data.dtype.kind == "b":
            raise MapInvariantError(f"InstanceLabelMap needs an integer dtype, got {data.dtype}")
        if data.size and data.min() < 0:
            raise MapInvariantError("InstanceLabelMap ids must be non-negative")
        data = np.array(data, dtype=np.uint32, order="C")
        _check_2d(data, "InstanceLabelMap")
        if data.size:
            top = int(data.max())
            # M distinct positive ids need at least M pixels
            if top > data.size or not np.all(np.bincount(data.ravel(), minlength=top + 1)[1:]):
                raise MapInvariantError("InstanceLabelMap ids must be contiguous 1..M")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def _unchecked(cls, data: np.ndarray) -> InstanceLabelMap:
        """Wrap a C-contiguous uint32 array already known to satisfy the invariants."""
        obj = object.__new__(cls)
        data.flags.writeable = False
        object.__setattr__(obj, "data", data)
        return obj

    @property
    def n_instances(self) -> int:
        return int(self.data.max()) if self.data.size else 0

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.data, other.data)


AnyMap = Union[ProbMap, OffsetMap, ValidityMask, InstanceLabelMap]


def _bit_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


def _payload(m: AnyMap) -> tuple[int, np.ndarray]:
    if isinstance(m, (ProbMap, OffsetMap)):
        return 0, m.data.astype("<f4", copy=False)
    if isinstance(m, ValidityMask):
        return 1, m.data.astype(np.uint8)
    if isinstance(m, InstanceLabelMap):
        return 2, m.data.astype("<u4", copy=False)
    raise TypeError(f"cannot serialise {type(m).__name__}")


def tensor_bytes(m: AnyMap) -> bytes:
    code, arr = _payload(m)
    header = MAGIC + struct.pack("<BBH", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr).tobytes()


def write_tensor(m: AnyMap, stream: BinaryIO) -> None:
    stream.write(tensor_bytes(m))


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise LengthMismatchError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def read_tensor(stream: BinaryIO) -> AnyMap:
    """Parse one DTEN tensor and wrap it in the matching map type.

    Trailing bytes after the payload are rejected as a length mismatch.
    """
    magic = stream.read(4)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, code, ndim = struct.unpack("<BBH", _read_exact(stream, 4, "header"))
    if version != VERSION:
        raise UnsupportedFormatError(f"unsupported DTEN version {version}")
    if code not in _DTYPE_CODES:
        raise UnsupportedFormatError(f"unsupported DTEN dtype code {code}")
    dims = struct.unpack(f"<{ndim}I", _read_exact(stream, 4 * ndim, "dims"))
    dtype = _DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    raw = stream.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        raise LengthMismatchError(
            f"payload length {len(raw)} does not match dims {dims} ({count * dtype.itemsize} bytes)"
        )
    if stream.read(1):
        raise LengthMismatchError("trailing bytes after DTEN payload")
    arr = np.frombuffer(raw, dtype=dtype).reshape(dims)

    if code == 0 and ndim == 2:
        return ProbMap(arr)
    if code == 0 and ndim == 3 and dims[2] == 4:
        return OffsetMap(arr)
    if code == 1 and ndim == 2:
        return ValidityMask(arr)
    if code == 2 and ndim == 2:
        return InstanceLabelMap(arr)
    raise UnsupportedFormatError(f"no map type for dtype code {code} with dims {dims}")


def load(path) -> AnyMap:
    with open(path, "rb") as f:
        return read_tensor(f)


def save(m: AnyMap, path) -> None:
    with open(path, "wb") as f:
        write_tensor(m, f)
