import csv
import io
import json
import math

import numpy as np
import pytest

from quartz_lzs.affine import Int8Tensor, QuantParams, compute_params_int4, compute_params_int8, quantize_int8
from quartz_lzs.analysis import (
    CSV_COLUMNS,
    bit_entropies,
    code_entropy,
    entropy_comparison,
    flag_region_histogram,
    group_size_sweep,
    measure_distortion,
    naive_report,
    reports_to_csv,
    reports_to_json,
    stream_entropy,
    verify_bound,
)
from quartz_lzs.errors import DimensionError, ValidationError
from quartz_lzs.lzs import lzs_compress, lzs_decompress
from quartz_lzs.tensor import Tensor, sample_distribution, tensor_from_values

SYM = (-1.0, 1.0)


@pytest.fixture(scope="module")
def gauss():
    return sample_distribution("gaussian", 1.0, 10**6, 42)


# ---------------------------------------------------------------------------
# distortion
# ---------------------------------------------------------------------------

def test_distortion_identical():
    x = tensor_from_values(1, 3, [1, 2, 3])
    assert measure_distortion(x, x) == (0.0, 0.0)


def test_distortion_hand_example():
    assert measure_distortion(tensor_from_values(1, 2, [0, 1]), tensor_from_values(1, 2, [0, 0])) == (0.5, 0.5)


def test_distortion_shape_mismatch():
    with pytest.raises(DimensionError):
        measure_distortion(tensor_from_values(1, 2, [0, 1]), tensor_from_values(2, 1, [0, 1]))


def test_distortion_matches_per_sample_loop(gauss):
    r = verify_bound(gauss, 16)
    # independent per-sample recomputation in plain Python
    p = compute_params_int8(gauss)
    restored = lzs_decompress(lzs_compress(quantize_int8(gauss, p), 16)).codes.ravel().tolist()
    xs = gauss.data.ravel().tolist()
    s, z = p.scale, p.zero_point
    abs_err = [abs(x - float(np.float32((c - z) * s))) for x, c in zip(xs, restored)]
    assert r.e_total == pytest.approx(math.fsum(abs_err) / len(xs), rel=1e-9)
    assert r.mse == pytest.approx(math.fsum(e * e for e in abs_err) / len(xs), rel=1e-9)


# ---------------------------------------------------------------------------
# entropy
# ---------------------------------------------------------------------------

def test_entropy_examples():
    assert code_entropy(np.arange(16)) == 4.0
    assert code_entropy([5] * 100) == 0.0
    assert code_entropy([1, 2] * 50) == 1.0
    with pytest.raises(ValidationError):
        code_entropy([])
    with pytest.raises(ValidationError):
        code_entropy([16])


def test_bit_entropies():
    assert bit_entropies(np.arange(16)) == [1.0, 1.0, 1.0, 1.0]
    assert bit_entropies([0, 1] * 8) == [1.0, 0.0, 0.0, 0.0]
    assert stream_entropy([0, 1] * 8, "perbit") == 1.0
    with pytest.raises(ValidationError):
        stream_entropy([0], "bogus")


def test_perbit_upper_bounds_symbol():
    sym = np.random.default_rng(0).integers(0, 6, size=1000)
    assert stream_entropy(sym, "perbit") >= stream_entropy(sym, "symbol")


def test_entropy_comparison_gaussian(gauss):
    q, n = entropy_comparison(gauss, 16)
    assert q > n


def test_naive_entropy_ceiling_is_fifteen_levels():
    # codes are clamped to [-7, 7]: 15 reachable levels
    levels = np.arange(-7, 8, dtype=np.float32) * np.float32(2 / 15)
    x = Tensor(np.tile(levels, 100).reshape(1, -1))
    _, n = entropy_comparison(x, 16)
    assert n == pytest.approx(math.log2(15), abs=1e-12)


def test_entropy_point_mass():
    x = Tensor(np.zeros((1, 64), dtype=np.float32))
    assert entropy_comparison(x, 16) == (0.0, 0.0)


# ---------------------------------------------------------------------------
# bound verification
# ---------------------------------------------------------------------------

def test_verify_bound_gaussian_minmax(gauss):
    r = verify_bound(gauss, 16, distribution="gaussian", param=1.0, seed=42)
    assert r.n == 10**6
    assert 0.0 <= r.mass_high_bins <= 1.0
    assert sum(r.flag_region_counts) == r.n
    assert sum(r.h_histogram) == pytest.approx(1.0)
    assert r.worst_case_bound == pytest.approx(8 * r.scale8)
    # min-max over the samples puts most mass in high bins
    assert not r.bound_condition_met


def test_verify_bound_gaussian_calibrated():
    x = sample_distribution("gaussian", 0.05, 10**6, 42)
    r = verify_bound(x, 16, x_range=SYM)
    assert r.bound_condition_met
    assert r.sufficient_condition_met
    assert r.e_total_lt_e_q4
    assert r.e_total + 3 * r.diff_std_error < r.e_q4


def test_verify_bound_uniform_condition_not_met():
    x = sample_distribution("uniform", 1.0, 10**6, 7)
    r = verify_bound(x, 16)
    assert r.mass_high_bins == pytest.approx(1 - 15 / 255, abs=2e-3)
    assert not r.bound_condition_met


def test_verify_bound_point_mass():
    r = verify_bound(Tensor(np.zeros((1, 100), dtype=np.float32)), 16)
    assert r.e_total == 0.0 and r.e_q4 == 0.0
    assert r.bound_condition_met
    assert r.flag_region_counts == [100, 0, 0, 0, 0]


def test_expected_lzs_is_upper_envelope(gauss):
    for rng_x in (None, SYM):
        r = verify_bound(gauss, 1, x_range=rng_x)
        assert r.expected_lzs >= r.e_stage2
        assert r.max_stage2_lsb <= 15


def test_naive_report_view(gauss):
    r = naive_report(gauss, group_size=16)
    assert r.method == "naive_int4"
    assert r.mean_abs_error == r.e_q4
    assert r.entropy_bits == r.naive_entropy_bits


def test_matched_scale_convention(gauss):
    r = verify_bound(gauss, 16, int4_scale="matched")
    assert r.scale4 == 16 * r.scale8
    with pytest.raises(ValidationError):
        verify_bound(gauss, 16, int4_scale="nope")


def test_report_deterministic():
    x = sample_distribution("laplacian", 0.3, 5000, 3)
    a = reports_to_csv([verify_bound(x, 8)])
    b = reports_to_csv([verify_bound(sample_distribution("laplacian", 0.3, 5000, 3), 8)])
    assert a == b


def test_csv_and_json_serialization():
    x = sample_distribution("uniform", 1.0, 1000, 1)
    reports = group_size_sweep(x, [1, 4], distribution="uniform", param=1.0, seed=1)
    rows = list(csv.DictReader(io.StringIO(reports_to_csv(reports))))
    assert len(rows) == 2
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    assert CSV_COLUMNS[:6] == ("method", "distribution", "param", "seed", "n", "group_size")
    assert [int(r["group_size"]) for r in rows] == [1, 4]
    assert float(rows[1]["e_total"]) == reports[1].e_total
    data = json.loads(reports_to_json(reports))
    assert data[0]["flag_region_counts"] == reports[0].flag_region_counts
    nan_param = json.loads(reports_to_json([verify_bound(x, 4)]))
    assert nan_param[0]["param"] is None


# ---------------------------------------------------------------------------
# FLAG regions
# ---------------------------------------------------------------------------

P1 = QuantParams(1.0, 0)


def test_flag_regions_small_codes():
    p = lzs_compress(Int8Tensor(np.random.default_rng(0).integers(-7, 8, size=(3, 20)), P1), 4)
    assert flag_region_histogram(p) == [60, 0, 0, 0, 0]


def test_flag_regions_single_outlier_group():
    p = lzs_compress(Int8Tensor([[127, 1, 2, 3]], P1), 4)
    assert flag_region_histogram(p) == [0, 0, 0, 0, 4]


def test_flag_regions_mixed_bruteforce():
    codes = np.random.default_rng(5).integers(-127, 128, size=(6, 37)) // np.array([[1], [2], [4], [8], [16], [32]])
    g = 5
    p = lzs_compress(Int8Tensor(codes, P1), g)
    expected = [0] * 5
    for row in np.abs(codes).tolist():
        for start in range(0, len(row), g):
            grp = row[start:start + g]
            top = max(v.bit_length() for v in grp)
            expected[max(top - 3, 0)] += len(grp)
    assert flag_region_histogram(p) == expected


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def test_sweep_g1_elementwise_dominance():
    x = sample_distribution("gaussian", 0.1, 10**5, 9)
    p8 = compute_params_int8(x, x_range=SYM)
    p4 = compute_params_int4(x, x_range=SYM)
    q8 = quantize_int8(x, p8)
    restored = lzs_decompress(lzs_compress(q8, 1)).codes.astype(np.float64)
    xd = x.data.astype(np.float64)
    e_quartz = np.abs(xd - (restored - p8.zero_point) * p8.scale)
    naive_codes = np.clip(np.rint(xd / p4.scale) + p4.zero_point, -7, 7)
    e_naive = np.abs(xd - (naive_codes - p4.zero_point) * p4.scale)
    # samples whose INT8 magnitude needs no truncation
    small = np.abs(q8.codes) < 8
    assert small.any()
    assert np.all(e_quartz[small] <= e_naive[small] + 1e-12)
    r = group_size_sweep(x, [1], x_range=SYM)[0]
    assert r.e_total == pytest.approx(np.mean(np.abs(xd - np.float32((restored - p8.zero_point) * p8.scale))))


def test_sweep_monotone(gauss):
    errs = [r.mean_abs_error for r in group_size_sweep(gauss)]
    assert len(errs) == 9
    assert all(a <= b for a, b in zip(errs, errs[1:]))


def test_sweep_constant_tensor():
    x = Tensor(np.full((1, 300), 2.0, dtype=np.float32))
    for r in group_size_sweep(x):
        assert r.mean_abs_error == 0.0 and r.e_q4 == 0.0


def test_sweep_empty_sizes():
    with pytest.raises(ValidationError):
        group_size_sweep(tensor_from_values(1, 1, [1.0]), [])
