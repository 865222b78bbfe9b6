"""Stage 2: group-wise leading-zero suppression down to 4-bit sign-magnitude.

Each INT8 code is split into a sign bit and a 7-bit magnitude. Codes are
grouped along the columns (the GEMM reduction dimension); every group gets a
shared shift ``FLAG = max(29 - clz32(OR of magnitudes), 0)`` in ``0..4`` and
each magnitude is stored as ``mag >> FLAG`` in 3 bits. A nibble holds the
sign in bit 3 and the shifted magnitude in bits 2..0.

QPACK layout (all integers little-endian)::

    offset  size  field
    0       5     magic b"QPACK"
    5       1     version (1)
    6       4     rows        u32
    10      4     cols        u32
    14      4     group_size  u32
    18      4     scale       f32
    22      2     zero_point  i16
    24      R*G   flags, one byte per group, row-major (G = ceil(cols/group_size))
    ...     ceil(R*C/2) codes, row-major nibble stream, low nibble first,
                  a trailing odd nibble is zero-padded
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .affine import Int8Tensor, Params, QuantParams
from .errors import DimensionError, FormatError, ValidationError

MAX_GROUP_SIZE = 256
MAX_FLAG = 4
SIGN_BIT = 0x8
MAG_MASK = 0x7
SHIFT_MODES = ("trunc", "nearest")

QPACK_MAGIC = b"QPACK"
QPACK_VERSION = 1
_QPACK_HEADER = struct.Struct("<5sBIIIfh")
QPACK_HEADER_SIZE = _QPACK_HEADER.size


def clz32(m: int) -> int:
    """Leading zero bits of ``m`` as an unsigned 32-bit integer."""
    m = int(m)
    if not 0 <= m < 1 << 32:
        raise ValidationError(f"clz32 argument out of u32 range: {m}")
    return 32 - m.bit_length()


def magnitude_bitlength(m: int) -> int:
    """H(m): 0 for m = 0, else floor(log2 m) + 1."""
    m = int(m)
    if not 0 <= m <= 127:
        raise ValidationError(f"magnitude must be in [0, 127], got {m}")
    return m.bit_length()


def flag_for_group(mags: Iterable[int]) -> int:
    mags = [int(v) for v in mags]
    if not mags:
        raise ValidationError("a group needs at least one magnitude")
    acc = 0
    for v in mags:
        if not 0 <= v <= 127:
            raise ValidationError(f"magnitude must be in [0, 127], got {v}")
        acc |= v
    return max(29 - clz32(acc), 0)


def lzs_truncation_error_bound(m: int) -> int:
    """Worst-case truncation of magnitude ``m`` in INT8 LSB units."""
    h = magnitude_bitlength(m)
    return 0 if h <= 3 else (1 << (h - 3)) - 1


def expected_lzs_error(h_hist: Sequence[float], s8: float) -> float:
    """``s8 * sum_{k=4..7} P_k (2**(k-3) - 1)`` for a bit-length histogram P_0..P_7."""
    p = np.asarray(h_hist, dtype=np.float64)
    if p.shape != (8,):
        raise ValidationError(f"bit-length histogram needs 8 entries, got shape {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError(f"bit-length histogram must be a probability vector (sum={p.sum()!r})")
    weights = np.array([0, 0, 0, 0, 1, 3, 7, 15], dtype=np.float64)
    return float(s8 * np.dot(p, weights))


# FLAG for every possible OR-ed magnitude, straight from the clz definition
FLAG_TABLE = np.array([max(29 - clz32(m), 0) for m in range(128)], dtype=np.uint8)


def num_groups(cols: int, group_size: int) -> int:
    return -(-cols // group_size)


def _check_group_size(group_size: int) -> int:
    if int(group_size) != group_size or not 1 <= group_size <= MAX_GROUP_SIZE:
        raise ValidationError(f"group size must be an integer in [1, {MAX_GROUP_SIZE}], got {group_size}")
    return int(group_size)


def pack_nibbles(nibbles: np.ndarray) -> np.ndarray:
    """Row-major nibble stream, low nibble = earlier element."""
    flat = np.asarray(nibbles, dtype=np.uint8).ravel()
    if flat.size % 2:
        flat = np.append(flat, np.uint8(0))
    return (flat[0::2] & 0xF) | ((flat[1::2] & 0xF) << 4)


def unpack_nibbles(packed: np.ndarray, count: int) -> np.ndarray:
    packed = np.asarray(packed, dtype=np.uint8)
    out = np.empty(packed.size * 2, dtype=np.uint8)
    out[0::2] = packed & 0xF
    out[1::2] = packed >> 4
    return out[:count]


@dataclass(frozen=True, eq=False)
class PackedTensor:
    """4-bit LZS-compressed INT8 tensor.

    ``flags`` is a ``(rows, ceil(cols / group_size))`` uint8 array and
    ``codes`` the packed nibble stream of length ``ceil(rows * cols / 2)``.
    """

    rows: int
    cols: int
    group_size: int
    flags: np.ndarray
    codes: np.ndarray
    params: Params

    def __post_init__(self) -> None:
        _check_group_size(self.group_size)
        if self.rows < 0 or self.cols < 0:
            raise DimensionError(f"negative shape ({self.rows}, {self.cols})")
        flags = np.array(self.flags, dtype=np.uint8).reshape(self.rows, num_groups(self.cols, self.group_size))
        codes = np.array(self.codes, dtype=np.uint8).ravel()
        if codes.size != (self.rows * self.cols + 1) // 2:
            raise DimensionError(f"code stream holds {codes.size} bytes, expected {(self.rows * self.cols + 1) // 2}")
        if flags.size and flags.max() > MAX_FLAG:
            raise ValidationError(f"FLAG values must be in [0, {MAX_FLAG}]")
        if not isinstance(self.params, QuantParams):
            object.__setattr__(self, "params", tuple(self.params))
            if len(self.params) != self.rows:
                raise DimensionError(f"{len(self.params)} per-row params for {self.rows} rows")
        flags.setflags(write=False)
        codes.setflags(write=False)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "codes", codes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def nibbles(self) -> np.ndarray:
        """Unpacked 4-bit symbols, shape ``(rows, cols)``."""
        return unpack_nibbles(self.codes, self.rows * self.cols).reshape(self.rows, self.cols)

    def signed_mags(self) -> np.ndarray:
        """Shifted sign-magnitude values ``sign * mag4`` as int8 in [-7, 7]."""
        nib = self.nibbles().astype(np.int8)
        mag = nib & MAG_MASK
        return np.where(nib & SIGN_BIT, -mag, mag).astype(np.int8)

    def element_flags(self) -> np.ndarray:
        """FLAG of the group each element belongs to, shape ``(rows, cols)``."""
        return np.repeat(self.flags, self.group_size, axis=1)[:, : self.cols]

    def storage_bytes(self) -> int:
        return QPACK_HEADER_SIZE + self.flags.size + self.codes.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PackedTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.group_size == other.group_size
            and self.params == other.params
            and np.array_equal(self.flags, other.flags)
            and np.array_equal(self.codes, other.codes)
        )

    __hash__ = None


def group_flags(mags: np.ndarray, group_size: int) -> np.ndarray:
    """Per-(row, group) FLAG for a ``(rows, cols)`` magnitude array."""
    rows, cols = mags.shape
    if cols == 0:
        return np.zeros((rows, 0), dtype=np.uint8)
    starts = np.arange(0, cols, group_size)
    ored = np.bitwise_or.reduceat(mags.astype(np.uint8), starts, axis=1)
    return FLAG_TABLE[ored]


def shift_magnitudes(mags: np.ndarray, flags: np.ndarray, mode: str = "trunc") -> np.ndarray:
    mags = mags.astype(np.int16)
    flags = flags.astype(np.int16)
    if mode == "trunc":
        return (mags >> flags).astype(np.uint8)
    if mode == "nearest":
        half = np.where(flags > 0, 1 << np.maximum(flags - 1, 0), 0)
        # rounding up may carry into bit 3; saturate at the largest 3-bit magnitude
        return np.minimum((mags + half) >> flags, MAG_MASK).astype(np.uint8)
    raise ValidationError(f"unknown shift mode {mode!r}; expected one of {SHIFT_MODES}")


def lzs_compress(q: Int8Tensor, group_size: int = 16, shift_round: str = "trunc") -> PackedTensor:
    group_size = _check_group_size(group_size)
    codes = q.codes.astype(np.int16)
    mags = np.abs(codes)
    flags = group_flags(mags, group_size)
    elem_flags = np.repeat(flags, group_size, axis=1)[:, : q.cols]
    mag4 = shift_magnitudes(mags, elem_flags, shift_round)
    # negative zero is stored as +0
    sign = ((codes < 0) & (mag4 > 0)).astype(np.uint8)
    nibbles = (sign << 3) | mag4
    return PackedTensor(q.rows, q.cols, group_size, flags, pack_nibbles(nibbles), q.params)


def lzs_decompress(p: PackedTensor) -> Int8Tensor:
    nib = p.nibbles()
    mag4 = (nib & MAG_MASK).astype(np.int16)
    restored = mag4 << p.element_flags().astype(np.int16)
    if restored.size and restored.max() > 127:
        raise ValidationError("restored magnitude exceeds 7 bits")
    sign = np.where(nib & SIGN_BIT, -1, 1)
    return Int8Tensor(sign * restored, p.params)


def packed_storage_bytes(rows: int, cols: int, group_size: int) -> int:
    """Header + one flag byte per group + ``ceil(rows*cols/2)`` code bytes."""
    return QPACK_HEADER_SIZE + rows * num_groups(cols, group_size) + (rows * cols + 1) // 2


def encode_packed(p: PackedTensor) -> bytes:
    if not isinstance(p.params, QuantParams):
        raise ValidationError("QPACK stores a single per-tensor QuantParams; per-row params are not serializable")
    header = _QPACK_HEADER.pack(
        QPACK_MAGIC, QPACK_VERSION, p.rows, p.cols, p.group_size, p.params.scale, p.params.zero_point
    )
    return header + p.flags.tobytes() + p.codes.tobytes()


def decode_packed(blob: bytes) -> PackedTensor:
    if len(blob) < QPACK_HEADER_SIZE:
        raise FormatError(f"QPACK header truncated ({len(blob)} bytes)")
    magic, version, rows, cols, group_size, scale, zero_point = _QPACK_HEADER.unpack_from(blob)
    if magic != QPACK_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {QPACK_MAGIC!r}")
    if version != QPACK_VERSION:
        raise FormatError(f"unsupported QPACK version {version}")
    if not 1 <= group_size <= MAX_GROUP_SIZE:
        raise FormatError(f"group size {group_size} out of range")
    n_flags = rows * num_groups(cols, group_size)
    n_codes = (rows * cols + 1) // 2
    if len(blob) != QPACK_HEADER_SIZE + n_flags + n_codes:
        raise FormatError(
            f"QPACK size mismatch: {len(blob)} bytes, expected {QPACK_HEADER_SIZE + n_flags + n_codes}"
        )
    flags = np.frombuffer(blob, dtype=np.uint8, count=n_flags, offset=QPACK_HEADER_SIZE)
    codes = np.frombuffer(blob, dtype=np.uint8, count=n_codes, offset=QPACK_HEADER_SIZE + n_flags)
    if flags.size and flags.max() > MAX_FLAG:
        raise FormatError(f"FLAG byte {int(flags.max())} exceeds {MAX_FLAG}")
    nib = unpack_nibbles(codes, 2 * n_codes)
    if (rows * cols) % 2 and nib[-1] != 0:
        raise FormatError("non-zero padding nibble")
    if np.any(nib[: rows * cols] == SIGN_BIT):
        raise FormatError("non-canonical negative zero nibble")
    try:
        return PackedTensor(rows, cols, group_size, flags.reshape(rows, num_groups(cols, group_size)), codes, QuantParams(scale, zero_point))
    except ValidationError as exc:
        raise FormatError(f"invalid QPACK contents: {exc}") from exc


def write_packed(p: PackedTensor, path: str | Path) -> None:
    Path(path).write_bytes(encode_packed(p))


def read_packed(path: str | Path) -> PackedTensor:
    return decode_packed(Path(path).read_bytes())
