"""Two-stage 4-bit quantization: affine INT8 followed by group-wise
leading-zero suppression, with an integer GEMM and error analysis tools."""

from .affine import (
    Int4Tensor,
    Int8Tensor,
    QuantParams,
    compute_params_int4,
    compute_params_int8,
    dequantize_int4_naive,
    dequantize_int8,
    matched_int4_params,
    quantize_int4_naive,
    quantize_int8,
)
from .analysis import (
    AnalysisReport,
    code_entropy,
    entropy_comparison,
    flag_region_histogram,
    group_size_sweep,
    measure_distortion,
    verify_bound,
)
from .errors import DimensionError, FormatError, QuartzError, ValidationError
from .lzs import (
    PackedTensor,
    clz32,
    expected_lzs_error,
    flag_for_group,
    lzs_compress,
    lzs_decompress,
    lzs_truncation_error_bound,
    magnitude_bitlength,
    read_packed,
    write_packed,
)
from .qgemm import QuantizedWeights, quantize_weights, quartz_gemm, reference_epilogue, reference_gemm
from .tensor import Tensor, read_tensor, sample_distribution, tensor_from_values, write_tensor

__version__ = "0.1.0"
