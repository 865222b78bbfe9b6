"""Integer GEMM over LZS-packed activations and symmetric 4-bit weights.

For activation row ``m`` and weight column ``n`` the per-group integer
accumulator is

    acc[m, g, n] = (sum_{k in g} a4[m, k] * w4[k, n]) << FLAG[m, g]
                   - z_a[m] * col_code_sums[g, n]

where ``a4`` is the stored sign-magnitude code and ``w4`` the weight code.
This equals ``sum_{k in g} (restored[m, k] - z_a[m]) * w4[k, n]`` exactly,
so the output ``s_a[m] * sum_g w_scale[g, n] * acc[m, g, n]`` is the matmul
of the dequantized operands. The epilogue runs in float64 with a fixed
group order and rounds to float32 once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .affine import params_list
from .errors import DimensionError, ValidationError
from .lzs import MAX_GROUP_SIZE, PackedTensor, lzs_decompress, num_groups
from .tensor import Tensor

WEIGHT_CODE_MAX = 7


@dataclass(frozen=True, eq=False)
class QuantizedWeights:
    """``K x N`` signed 4-bit weights grouped along K.

    ``scales`` and ``col_code_sums`` have shape ``(ceil(K / group_size), N)``.
    """

    codes: np.ndarray
    group_size: int
    scales: np.ndarray
    col_code_sums: np.ndarray

    def __post_init__(self) -> None:
        wide = np.asarray(self.codes, dtype=np.int64)
        if wide.ndim != 2:
            raise DimensionError(f"weight codes must be 2-D, got shape {wide.shape}")
        if wide.size and np.abs(wide).max() > WEIGHT_CODE_MAX:
            raise ValidationError("weight codes must lie in [-7, 7]")
        if not 1 <= self.group_size <= MAX_GROUP_SIZE:
            raise ValidationError(f"group size must be in [1, {MAX_GROUP_SIZE}], got {self.group_size}")
        groups = num_groups(wide.shape[0], self.group_size)
        scales = np.asarray(self.scales, dtype=np.float32).reshape(groups, wide.shape[1])
        sums = np.asarray(self.col_code_sums, dtype=np.int64).reshape(groups, wide.shape[1])
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise ValidationError("weight scales must be finite and positive")
        if not np.array_equal(sums, _group_sums(wide, self.group_size)):
            raise ValidationError("col_code_sums do not match the weight codes")
        codes = wide.astype(np.int8)
        for arr in (codes, scales, sums):
            arr.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "col_code_sums", sums)

    @property
    def rows(self) -> int:
        return self.codes.shape[0]

    @property
    def cols(self) -> int:
        return self.codes.shape[1]

    def dequantize(self) -> Tensor:
        per_row_scale = np.repeat(self.scales, self.group_size, axis=0)[: self.rows]
        return Tensor((self.codes.astype(np.float64) * per_row_scale.astype(np.float64)).astype(np.float32))


def _group_sums(codes: np.ndarray, group_size: int) -> np.ndarray:
    k, n = codes.shape
    if k == 0:
        return np.zeros((0, n), dtype=np.int64)
    return np.add.reduceat(codes.astype(np.int64), np.arange(0, k, group_size), axis=0)


def quantize_weights(w: Tensor, group_size: int = 64) -> QuantizedWeights:
    """Symmetric absmax quantization per (K-group, column): ``scale = max|w| / 7``."""
    if w.size == 0:
        raise ValidationError("cannot quantize an empty weight tensor")
    if not 1 <= group_size <= MAX_GROUP_SIZE:
        raise ValidationError(f"group size must be in [1, {MAX_GROUP_SIZE}], got {group_size}")
    data = w.data.astype(np.float64)
    starts = np.arange(0, w.rows, group_size)
    absmax = np.maximum.reduceat(np.abs(data), starts, axis=0)
    scales = np.where(absmax > 0, absmax / WEIGHT_CODE_MAX, 1.0).astype(np.float32)
    per_row_scale = np.repeat(scales.astype(np.float64), group_size, axis=0)[: w.rows]
    codes = np.clip(np.rint(data / per_row_scale), -WEIGHT_CODE_MAX, WEIGHT_CODE_MAX).astype(np.int64)
    return QuantizedWeights(codes, group_size, scales, _group_sums(codes, group_size))


def _check_operands(a: PackedTensor, w: QuantizedWeights) -> None:
    if a.cols != w.rows:
        raise DimensionError(f"inner dimensions differ: activations K={a.cols}, weights K={w.rows}")
    if a.group_size != w.group_size:
        raise ValidationError(f"group sizes differ: activations {a.group_size}, weights {w.group_size}")


def _row_params(a: PackedTensor) -> tuple[np.ndarray, np.ndarray]:
    plist = params_list(a.params, a.rows)
    scale = np.array([p.scale for p in plist], dtype=np.float64)
    zp = np.array([p.zero_point for p in plist], dtype=np.int64)
    return scale, zp


def quartz_accumulators(a: PackedTensor, w: QuantizedWeights) -> np.ndarray:
    """Per-group integer accumulators, shape ``(M, groups, N)``, int32."""
    _check_operands(a, w)
    a4 = a.signed_mags().astype(np.int32)
    w4 = w.codes.astype(np.int32)
    _, zp = _row_params(a)
    groups = num_groups(a.cols, a.group_size)
    acc = np.empty((a.rows, groups, w.cols), dtype=np.int32)
    for g in range(groups):
        sl = slice(g * a.group_size, (g + 1) * a.group_size)
        partial = a4[:, sl] @ w4[sl, :]
        shifted = partial << a.flags[:, g, None].astype(np.int32)
        acc[:, g, :] = shifted - zp[:, None].astype(np.int32) * w.col_code_sums[g][None, :].astype(np.int32)
    return acc


def _epilogue(acc: np.ndarray, a_scale: np.ndarray, w_scales: np.ndarray) -> np.ndarray:
    total = np.zeros((acc.shape[0], acc.shape[2]), dtype=np.float64)
    for g in range(acc.shape[1]):
        total += w_scales[g].astype(np.float64)[None, :] * acc[:, g, :]
    return (a_scale[:, None] * total).astype(np.float32)


def quartz_gemm(a: PackedTensor, w: QuantizedWeights) -> Tensor:
    acc = quartz_accumulators(a, w)
    a_scale, _ = _row_params(a)
    return Tensor(_epilogue(acc, a_scale, w.scales))


def reference_accumulators(a: PackedTensor, w: QuantizedWeights) -> np.ndarray:
    """Scalar oracle: decompress, subtract the zero point, multiply-accumulate per group."""
    _check_operands(a, w)
    restored = lzs_decompress(a).codes.tolist()
    wcodes = w.codes.tolist()
    plist = params_list(a.params, a.rows)
    groups = num_groups(a.cols, a.group_size)
    out = np.zeros((a.rows, groups, w.cols), dtype=np.int64)
    for m in range(a.rows):
        z = plist[m].zero_point
        row = restored[m]
        for g in range(groups):
            lo, hi = g * a.group_size, min((g + 1) * a.group_size, a.cols)
            for n in range(w.cols):
                s = 0
                for k in range(lo, hi):
                    s += (row[k] - z) * wcodes[k][n]
                out[m, g, n] = s
    return out


def reference_epilogue(a: PackedTensor, w: QuantizedWeights) -> Tensor:
    """Scalar float epilogue over the oracle accumulators, each sum exactly rounded."""
    acc = reference_accumulators(a, w).tolist()
    scales = w.scales.tolist()
    out = []
    for m, p in enumerate(params_list(a.params, a.rows)):
        for n in range(w.cols):
            total = math.fsum(scales[g][n] * acc[m][g][n] for g in range(len(scales)))
            out.append(p.scale * total)
    return Tensor(np.array(out, dtype=np.float32).reshape(a.rows, w.cols))


def reference_gemm(a: PackedTensor, w: QuantizedWeights) -> Tensor:
    """Float oracle: decompress, dequantize both operands, float64 matmul."""
    _check_operands(a, w)
    restored = lzs_decompress(a).codes.astype(np.float64)
    a_scale, zp = _row_params(a)
    x_hat = (restored - zp[:, None]) * a_scale[:, None]
    w_hat = w.codes.astype(np.float64) * np.repeat(w.scales.astype(np.float64), w.group_size, axis=0)[: w.rows]
    return Tensor((x_hat @ w_hat).astype(np.float32))
