"""Stage 1: affine min-max INT8 quantization and the naive INT4 baseline.

Codes are signed. The zero point is stored recentred, ``round(-x_min/s) - 128``
for INT8 (``- 8`` for INT4), so a symmetric range maps onto the symmetric
code range. A range that excludes zero is widened to include it. Rounding
is round-half-to-even throughout, and scales are rounded to float32 when
computed so every later step uses the exact value a file would store.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DimensionError, ValidationError
from .tensor import Tensor

INT8_LEVELS = 255
INT8_CODE_MAX = 127
INT4_LEVELS = 15
INT4_CODE_MAX = 7
_MIN_SCALE = float(np.finfo(np.float32).tiny)


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int

    def __post_init__(self) -> None:
        scale = float(np.float32(self.scale))
        if not (math.isfinite(scale) and scale > 0):
            raise ValidationError(f"scale must be finite and > 0 in float32, got {self.scale}")
        if int(self.zero_point) != self.zero_point or not -128 <= self.zero_point <= 127:
            raise ValidationError(f"zero_point must be an integer in [-128, 127], got {self.zero_point}")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "zero_point", int(self.zero_point))


# one QuantParams per tensor, or one per row
Params = Union[QuantParams, tuple[QuantParams, ...]]


def _param_columns(params: Params, rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Scale and zero point as ``(rows, 1)`` float64/int64 columns."""
    if isinstance(params, QuantParams):
        return np.full((rows, 1), params.scale), np.full((rows, 1), params.zero_point, dtype=np.int64)
    if len(params) != rows:
        raise DimensionError(f"{len(params)} per-row params for {rows} rows")
    scale = np.array([p.scale for p in params], dtype=np.float64).reshape(rows, 1)
    zp = np.array([p.zero_point for p in params], dtype=np.int64).reshape(rows, 1)
    return scale, zp


@dataclass(frozen=True, eq=False)
class _CodeTensor:
    codes: np.ndarray
    params: Params

    _code_max = INT8_CODE_MAX

    def __post_init__(self) -> None:
        wide = np.asarray(self.codes, dtype=np.int64)
        if wide.ndim != 2:
            raise DimensionError(f"codes must be 2-D, got shape {wide.shape}")
        if wide.size and (wide.min() < -self._code_max or wide.max() > self._code_max):
            raise ValidationError(f"codes must lie in [-{self._code_max}, {self._code_max}]")
        codes = wide.astype(np.int8)
        if not isinstance(self.params, QuantParams):
            object.__setattr__(self, "params", tuple(self.params))
            _param_columns(self.params, codes.shape[0])
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @property
    def rows(self) -> int:
        return self.codes.shape[0]

    @property
    def cols(self) -> int:
        return self.codes.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.codes, other.codes)

    __hash__ = None


class Int8Tensor(_CodeTensor):
    """Signed INT8 codes in [-127, 127] with their quantization params."""

    _code_max = INT8_CODE_MAX


class Int4Tensor(_CodeTensor):
    """Naive signed INT4 codes in [-7, 7]."""

    _code_max = INT4_CODE_MAX


def _minmax_params(lo: float, hi: float, levels: int) -> QuantParams:
    half = (levels + 1) // 2
    if hi == lo:
        return QuantParams(1.0, int(np.clip(-np.rint(lo), -128, 127)))
    # zero must be representable or the recentred zero point leaves [-128, 127]
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    scale = max((hi - lo) / levels, _MIN_SCALE)
    # zero point from the exact ratio, not via the float32-rounded scale
    zp = np.rint(-lo * levels / (hi - lo)) - half
    return QuantParams(scale, int(np.clip(zp, -half, half - 1)))


def _row_ranges(x: Tensor, x_range, per_row: bool) -> list[tuple[float, float]]:
    if x_range is not None:
        lo, hi = float(x_range[0]), float(x_range[1])
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise ValidationError(f"invalid calibration range {x_range}")
        return [(lo, hi)] * (x.rows if per_row else 1)
    if x.size == 0:
        raise ValidationError("cannot compute quantization params of an empty tensor")
    data = x.data.astype(np.float64)
    if per_row:
        return list(zip(data.min(axis=1).tolist(), data.max(axis=1).tolist()))
    return [(float(data.min()), float(data.max()))]


def _compute(x: Tensor, levels: int, x_range, per_row: bool) -> Params:
    ranges = _row_ranges(x, x_range, per_row)
    params = tuple(_minmax_params(lo, hi, levels) for lo, hi in ranges)
    return params if per_row else params[0]


def compute_params_int8(x: Tensor, x_range: tuple[float, float] | None = None, per_row: bool = False) -> Params:
    """Min-max INT8 params; ``x_range`` overrides the observed min/max (static calibration)."""
    return _compute(x, INT8_LEVELS, x_range, per_row)


def compute_params_int4(x: Tensor, x_range: tuple[float, float] | None = None, per_row: bool = False) -> Params:
    return _compute(x, INT4_LEVELS, x_range, per_row)


def matched_int4_params(p8: Params) -> Params:
    """INT4 params on the INT8 grid coarsened by 16 (``s4 = 16 * s8``)."""
    if not isinstance(p8, QuantParams):
        return tuple(matched_int4_params(p) for p in p8)
    zp = int(np.clip(np.rint(p8.zero_point / 16), -8, 7))
    return QuantParams(16 * p8.scale, zp)


def _quantize(x: Tensor, params: Params, code_max: int) -> np.ndarray:
    scale, zp = _param_columns(params, x.rows)
    codes = np.rint(x.data.astype(np.float64) / scale) + zp
    return np.clip(codes, -code_max, code_max).astype(np.int8)


def _dequantize(codes: np.ndarray, params: Params) -> Tensor:
    scale, zp = _param_columns(params, codes.shape[0])
    return Tensor(((codes.astype(np.int64) - zp) * scale).astype(np.float32))


def quantize_int8(x: Tensor, params: Params | None = None) -> Int8Tensor:
    if params is None:
        params = compute_params_int8(x)
    return Int8Tensor(_quantize(x, params, INT8_CODE_MAX), params)


def dequantize_int8(q: Int8Tensor) -> Tensor:
    return _dequantize(q.codes, q.params)


def quantize_int4_naive(x: Tensor, params: Params | None = None) -> Int4Tensor:
    if params is None:
        params = compute_params_int4(x)
    return Int4Tensor(_quantize(x, params, INT4_CODE_MAX), params)


def dequantize_int4_naive(q: Int4Tensor) -> Tensor:
    return _dequantize(q.codes, q.params)


def params_list(params: Params, rows: int) -> Sequence[QuantParams]:
    if isinstance(params, QuantParams):
        return [params] * rows
    return list(params)
