"""Distortion, bound and entropy measurements comparing the two-stage path
with naive min-max INT4 on the same samples.

Conventions:
    * E_total is the mean absolute error of x against INT8 -> LZS -> dequant.
    * E_q4 is the mean absolute error of x against naive INT4 -> dequant.
    * "high-index bins" are INT8 codes with magnitude >= 8, i.e. H(m) >= 4.
    * the dominance check ``e_total_lt_e_q4`` requires
      ``E_total + 3 * SE < E_q4`` with SE the standard error of the mean of
      the per-sample difference ``|err_quartz| - |err_naive|``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .affine import (
    compute_params_int4,
    compute_params_int8,
    dequantize_int4_naive,
    dequantize_int8,
    matched_int4_params,
    params_list,
    quantize_int4_naive,
    quantize_int8,
)
from .errors import DimensionError, ValidationError
from .lzs import PackedTensor, expected_lzs_error, lzs_compress, lzs_decompress
from .tensor import Tensor

DEFAULT_SWEEP_SIZES = (1, 2, 4, 8, 16, 32, 64, 128, 256)
ENTROPY_MODES = ("symbol", "perbit")
INT4_SCALES = ("minmax", "matched")
SIGMA_MARGIN = 3.0


@dataclass
class AnalysisReport:
    method: str = "quartz"
    distribution: str = "tensor"
    param: float = float("nan")
    seed: int = -1
    n: int = 0
    group_size: int = 16
    shift_round: str = "trunc"
    int4_scale: str = "minmax"
    scale8: float = 0.0
    scale4: float = 0.0
    mean_abs_error: float = 0.0
    mse: float = 0.0
    e_total: float = 0.0
    e_q4: float = 0.0
    e_q4_mse: float = 0.0
    e_stage2: float = 0.0
    max_stage2_lsb: int = 0
    expected_lzs: float = 0.0
    worst_case_bound: float = 0.0
    mass_high_bins: float = 0.0
    bound_condition_met: bool = True
    sufficient_condition_met: bool = True
    diff_std_error: float = 0.0
    e_total_lt_e_q4: bool = False
    entropy_bits: float = 0.0
    naive_entropy_bits: float = 0.0
    bit_entropies: list[float] = field(default_factory=lambda: [0.0] * 4)
    flag_region_counts: list[int] = field(default_factory=lambda: [0] * 5)
    h_histogram: list[float] = field(default_factory=lambda: [0.0] * 8)

    def to_dict(self) -> dict:
        return asdict(self)


def _flatten_row(report: AnalysisReport) -> dict:
    row = {}
    for key, value in report.to_dict().items():
        if key == "bit_entropies":
            row.update({f"bit_entropy_{i}": v for i, v in enumerate(value)})
        elif key == "flag_region_counts":
            row.update({f"F{i}": v for i, v in enumerate(value)})
        elif key == "h_histogram":
            row.update({f"P_{i}": v for i, v in enumerate(value)})
        else:
            row[key] = value
    return row


CSV_COLUMNS = tuple(_flatten_row(AnalysisReport()).keys())


def reports_to_csv(reports: Sequence[AnalysisReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in _flatten_row(r).items()})
    return buf.getvalue()


def _json_safe(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def reports_to_json(reports: Sequence[AnalysisReport]) -> str:
    rows = [{k: _json_safe(v) for k, v in r.to_dict().items()} for r in reports]
    return json.dumps(rows, indent=2, sort_keys=True, allow_nan=False) + "\n"


def measure_distortion(x: Tensor, x_hat: Tensor) -> tuple[float, float]:
    """Mean absolute error and mean squared error."""
    if x.shape != x_hat.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    if x.size == 0:
        raise ValidationError("cannot measure distortion of an empty tensor")
    err = x.data.astype(np.float64) - x_hat.data.astype(np.float64)
    return float(np.mean(np.abs(err))), float(np.mean(err * err))


def _symbol_probs(codes4) -> np.ndarray:
    sym = np.asarray(codes4).ravel()
    if sym.size == 0:
        raise ValidationError("entropy of an empty symbol stream is undefined")
    if sym.min() < 0 or sym.max() > 15:
        raise ValidationError("4-bit symbols must lie in [0, 15]")
    return np.bincount(sym.astype(np.int64), minlength=16) / sym.size


def code_entropy(codes4) -> float:
    """Shannon entropy in bits of a stream of 4-bit symbols."""
    p = _symbol_probs(codes4)
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def bit_entropies(codes4) -> list[float]:
    """Binary entropy of each of the four bit positions (LSB first)."""
    sym = np.asarray(codes4).ravel()
    _symbol_probs(sym)
    out = []
    for b in range(4):
        p1 = float(np.mean((sym >> b) & 1))
        out.append(0.0 if p1 in (0.0, 1.0) else float(-(p1 * np.log2(p1) + (1 - p1) * np.log2(1 - p1))))
    return out


def stream_entropy(codes4, mode: str = "symbol") -> float:
    """``symbol``: 16-symbol entropy; ``perbit``: sum of the four per-bit entropies."""
    if mode == "symbol":
        return code_entropy(codes4)
    if mode == "perbit":
        return float(sum(bit_entropies(codes4)))
    raise ValidationError(f"unknown entropy mode {mode!r}; expected one of {ENTROPY_MODES}")


def flag_region_histogram(p: PackedTensor) -> list[int]:
    """Element counts living in groups with FLAG 0..4."""
    return np.bincount(p.element_flags().ravel(), minlength=5)[:5].astype(int).tolist()


def _naive_params(x: Tensor, p8, x_range, int4_scale: str):
    if int4_scale == "minmax":
        return compute_params_int4(x, x_range=x_range)
    if int4_scale == "matched":
        return matched_int4_params(p8)
    raise ValidationError(f"unknown INT4 scale convention {int4_scale!r}; expected one of {INT4_SCALES}")


def _first_scale(params) -> float:
    return params_list(params, 1)[0].scale


def verify_bound(
    x: Tensor,
    group_size: int = 16,
    *,
    x_range: tuple[float, float] | None = None,
    int4_scale: str = "minmax",
    shift_round: str = "trunc",
    distribution: str = "tensor",
    param: float = float("nan"),
    seed: int = -1,
) -> AnalysisReport:
    """Run both paths on ``x`` and collect every distortion/bound statistic.

    ``x_range`` fixes the calibration interval for both quantizers instead
    of the observed min/max (as static per-tensor activation calibration
    would).
    """
    p8 = compute_params_int8(x, x_range=x_range)
    q8 = quantize_int8(x, p8)
    packed = lzs_compress(q8, group_size, shift_round)
    restored = lzs_decompress(packed)
    x_quartz = dequantize_int8(restored)

    p4 = _naive_params(x, p8, x_range, int4_scale)
    q4 = quantize_int4_naive(x, p4)
    x_naive = dequantize_int4_naive(q4)

    s8 = _first_scale(p8)
    e_total, mse = measure_distortion(x, x_quartz)
    e_q4, e_q4_mse = measure_distortion(x, x_naive)

    xd = x.data.astype(np.float64)
    diff = np.abs(xd - x_quartz.data) - np.abs(xd - x_naive.data)
    se = float(np.std(diff, ddof=1) / np.sqrt(diff.size)) if diff.size > 1 else 0.0

    mags = np.abs(q8.codes.astype(np.int64))
    stage2_lsb = np.abs(q8.codes.astype(np.int64) - restored.codes.astype(np.int64))
    h_counts = np.bincount(np.frexp(mags.ravel().astype(np.float64))[1], minlength=8)[:8]
    h_hist = (h_counts / mags.size).tolist()
    mass_high = float(np.mean(mags >= 8))
    expected = expected_lzs_error(h_hist, s8)

    nib_naive = (q4.codes.astype(np.int64) & 0xF).ravel()
    nib_quartz = packed.nibbles().ravel()

    return AnalysisReport(
        method="quartz",
        distribution=distribution,
        param=float(param),
        seed=int(seed),
        n=x.size,
        group_size=group_size,
        shift_round=shift_round,
        int4_scale=int4_scale,
        scale8=s8,
        scale4=_first_scale(p4),
        mean_abs_error=e_total,
        mse=mse,
        e_total=e_total,
        e_q4=e_q4,
        e_q4_mse=e_q4_mse,
        e_stage2=float(np.mean(stage2_lsb) * s8),
        max_stage2_lsb=int(stage2_lsb.max()),
        expected_lzs=expected,
        worst_case_bound=8.0 * s8,
        mass_high_bins=mass_high,
        bound_condition_met=mass_high < 0.5,
        sufficient_condition_met=expected < 7.5 * s8,
        diff_std_error=se,
        e_total_lt_e_q4=e_total + SIGMA_MARGIN * se < e_q4,
        entropy_bits=code_entropy(nib_quartz),
        naive_entropy_bits=code_entropy(nib_naive),
        bit_entropies=bit_entropies(nib_quartz),
        flag_region_counts=flag_region_histogram(packed),
        h_histogram=h_hist,
    )


def naive_report(x: Tensor, **kwargs) -> AnalysisReport:
    """Same measurements, viewed from the naive INT4 side."""
    r = verify_bound(x, **kwargs)
    r.method = "naive_int4"
    r.mean_abs_error, r.mse = r.e_q4, r.e_q4_mse
    r.entropy_bits = r.naive_entropy_bits
    return r


def group_size_sweep(x: Tensor, sizes: Sequence[int] = DEFAULT_SWEEP_SIZES, **kwargs) -> list[AnalysisReport]:
    if len(sizes) == 0:
        raise ValidationError("group size sweep needs at least one size")
    return [verify_bound(x, g, **kwargs) for g in sizes]


def entropy_comparison(
    x: Tensor,
    group_size: int = 16,
    mode: str = "symbol",
    *,
    x_range: tuple[float, float] | None = None,
    int4_scale: str = "minmax",
    shift_round: str = "trunc",
) -> tuple[float, float]:
    """Entropy of the packed nibble stream and of the naive INT4 code stream."""
    p8 = compute_params_int8(x, x_range=x_range)
    packed = lzs_compress(quantize_int8(x, p8), group_size, shift_round)
    q4 = quantize_int4_naive(x, _naive_params(x, p8, x_range, int4_scale))
    return (
        stream_entropy(packed.nibbles(), mode),
        stream_entropy(q4.codes.astype(np.int64) & 0xF, mode),
    )
