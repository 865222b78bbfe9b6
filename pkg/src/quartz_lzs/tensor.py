"""Dense 2-D float32 tensors, seeded samplers and the QTNSR file format."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, FormatError, ValidationError
from .rng import uniform_open

QTNSR_MAGIC = b"QTNSR"
QTNSR_VERSION = 1
_QTNSR_HEADER = struct.Struct("<5sBII")

DISTRIBUTIONS = ("gaussian", "laplacian", "uniform")


@dataclass(frozen=True, eq=False)
class Tensor:
    """Immutable row-major float32 matrix.

    ``data`` is a read-only ``(rows, cols)`` float32 array. Construct through
    :func:`tensor_from_values` or :meth:`from_array` so the finiteness check
    runs.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise DimensionError(f"tensor must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("tensor values must be finite")
        if arr is self.data:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, array) -> "Tensor":
        return cls(np.asarray(array, dtype=np.float32))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def values(self) -> list[float]:
        return self.data.ravel().tolist()

    def bitwise_equal(self, other: "Tensor") -> bool:
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.bitwise_equal(other)

    __hash__ = None

    def __repr__(self) -> str:
        return f"Tensor({self.rows}x{self.cols})"


def tensor_from_values(rows: int, cols: int, values: Sequence[float]) -> Tensor:
    if rows < 0 or cols < 0:
        raise DimensionError(f"negative shape ({rows}, {cols})")
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size != rows * cols:
        raise DimensionError(f"expected {rows * cols} values for {rows}x{cols}, got {flat.size}")
    if not np.all(np.isfinite(flat)):
        raise ValidationError("tensor values must be finite")
    return Tensor(flat.astype(np.float32).reshape(rows, cols))


def sample_distribution(kind: str, param: float, n: int, seed: int) -> Tensor:
    """Draw a ``1 x n`` zero-centred sample from the SplitMix64 stream.

    ``param`` is the standard deviation (gaussian), the scale ``b``
    (laplacian) or the half-width (uniform). Gaussian samples come from the
    Box-Muller transform applied to consecutive uniform pairs
    ``(u[2j], u[2j+1])``: ``r = sqrt(-2 ln u[2j])``, outputs
    ``r cos(2 pi u[2j+1])`` then ``r sin(2 pi u[2j+1])``. Laplacian samples
    use the inverse CDF of one uniform each; uniform samples are
    ``param * (2u - 1)``.
    """
    if kind not in DISTRIBUTIONS:
        raise ValidationError(f"unknown distribution {kind!r}; expected one of {DISTRIBUTIONS}")
    if not (math.isfinite(param) and param > 0):
        raise ValidationError(f"distribution parameter must be > 0, got {param}")
    if n <= 0:
        raise ValidationError(f"sample count must be positive, got {n}")

    if kind == "gaussian":
        pairs = (n + 1) // 2
        u = uniform_open(seed, 2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        x = param * z.ravel()[:n]
    elif kind == "laplacian":
        u = uniform_open(seed, n)
        x = np.where(u < 0.5, param * np.log(2.0 * u), -param * np.log(2.0 * (1.0 - u)))
    else:
        u = uniform_open(seed, n)
        x = param * (2.0 * u - 1.0)
    return Tensor(x.astype(np.float32).reshape(1, n))


def encode_tensor(t: Tensor) -> bytes:
    header = _QTNSR_HEADER.pack(QTNSR_MAGIC, QTNSR_VERSION, t.rows, t.cols)
    return header + t.data.astype("<f4").tobytes()


def decode_tensor(blob: bytes) -> Tensor:
    if len(blob) < _QTNSR_HEADER.size:
        raise FormatError(f"QTNSR header truncated ({len(blob)} bytes)")
    magic, version, rows, cols = _QTNSR_HEADER.unpack_from(blob)
    if magic != QTNSR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {QTNSR_MAGIC!r}")
    if version != QTNSR_VERSION:
        raise FormatError(f"unsupported QTNSR version {version}")
    expected = _QTNSR_HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise FormatError(f"QTNSR payload size mismatch: {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=_QTNSR_HEADER.size).reshape(rows, cols)
    try:
        return Tensor(data.astype(np.float32))
    except ValidationError as exc:
        raise FormatError(f"QTNSR payload invalid: {exc}") from exc


def write_tensor(t: Tensor, path: str | Path) -> None:
    Path(path).write_bytes(encode_tensor(t))


def read_tensor(path: str | Path) -> Tensor:
    return decode_tensor(Path(path).read_bytes())
